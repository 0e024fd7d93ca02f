//! The offline stage: ask the model for guidelines drawn from sampled
//! experience and keep the candidate that performs best on validation tasks.

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bench::{metric_at_t, Benchmark};
use crate::canonical::Discretizers;
use crate::error::{Error, Result};
use crate::llm::{CompletionRequest, LlmBackend, DEFAULT_MAX_TOKENS};
use crate::retrieval::{KnowledgeItem, PoolEntry, Provenance};
use crate::rng::{substream, StreamRng};
use crate::space::{Solution, SolutionSpace, Task};
use crate::suggestion::{Copilot, DemoBlock, SuggestionConfig};

pub const DEFAULT_QUESTIONS: [&str; 4] = [
    "Q: From the examples above, what patterns can we observe about the relationship between dataset characteristics and the best hyper-parameter configurations? Answer MUST be concise, critical, point-by-point, line-by-line, and brief. Only include relevant observations without unnecessary elaboration.",
    "Q: Looking at the datasets and their best configurations, what patterns can we observe that link dataset properties to good hyper-parameter choices? List short, specific observations, one per line.",
    "Q: Suppose a new dataset arrives. From the examples above, what patterns can we observe that would tell us which hyper-parameter levels to try first? Answer point by point, one line each.",
    "Q: Be skeptical of coincidences. From the examples above, what patterns can we observe between dataset characteristics and the best hyper-parameter configurations that hold across several datasets? Give brief numbered points.",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElicitationConfig {
    pub rounds: usize,
    pub patience: usize,
    pub val_fraction: f64,
    /// Tasks sampled into each elicitation prompt.
    pub tasks_per_prompt: usize,
    pub demos_per_task: usize,
    pub questions: Vec<String>,
    pub max_tokens: usize,
}

impl Default for ElicitationConfig {
    fn default() -> Self {
        ElicitationConfig {
            rounds: 10,
            patience: 2,
            val_fraction: 0.1,
            tasks_per_prompt: 3,
            demos_per_task: 3,
            questions: DEFAULT_QUESTIONS.iter().map(|q| q.to_string()).collect(),
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

impl ElicitationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config(
                "elicitation rounds must be at least 1".into(),
            ));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config("val_fraction must lie in (0, 1)".into()));
        }
        if self.tasks_per_prompt == 0 || self.demos_per_task == 0 {
            return Err(Error::Config(
                "tasks_per_prompt and demos_per_task must be at least 1".into(),
            ));
        }
        if self.questions.is_empty() || self.questions.iter().any(|q| q.trim().is_empty()) {
            return Err(Error::Config(
                "questions must be a non-empty list of non-empty texts".into(),
            ));
        }
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be at least 1".into()));
        }
        Ok(())
    }
}

/// Splits tasks into (train, validation) with `ceil(val_fraction * N)`
/// validation tasks sampled uniformly under `seed`. Both parts keep input order.
pub fn split_validation<'a>(
    tasks: &[&'a Task],
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<&'a Task>, Vec<&'a Task>)> {
    if tasks.len() < 2 {
        return Err(Error::Config(format!(
            "validation split needs at least 2 tasks, got {}",
            tasks.len()
        )));
    }
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Config("val_fraction must lie in (0, 1)".into()));
    }
    let n_val = ((val_fraction * tasks.len() as f64).ceil() as usize).clamp(1, tasks.len() - 1);
    let mut rng = substream(seed, "split");
    let picked: HashSet<usize> = sample(&mut rng, tasks.len(), n_val).into_iter().collect();
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (i, t) in tasks.iter().enumerate() {
        if picked.contains(&i) {
            val.push(*t);
        } else {
            train.push(*t);
        }
    }
    Ok((train, val))
}

/// Space description, one block per sampled task, then the question,
/// separated by blank lines.
pub fn build_elicitation_prompt(
    space: &SolutionSpace,
    sampled: &[DemoBlock],
    question: &str,
) -> Result<String> {
    if sampled.is_empty() {
        return Err(Error::InvalidInput(
            "elicitation prompt needs at least one task".into(),
        ));
    }
    let mut sections = vec![space.description.clone()];
    sections.extend(sampled.iter().map(DemoBlock::render));
    sections.push(question.to_string());
    Ok(sections.join("\n\n"))
}

/// What a knowledge candidate is validated against.
pub struct ValidationContext<'a> {
    pub space: &'a SolutionSpace,
    pub discretizers: &'a Discretizers,
    /// Pool the mock online stage retrieves from.
    pub pool: &'a [PoolEntry],
    pub benchmark: &'a Benchmark,
    pub suggestion: &'a SuggestionConfig,
    pub val_tasks: &'a [&'a Task],
    /// Tasks never to be retrieved during validation.
    pub exclude: &'a HashSet<String>,
    pub fallback: Option<&'a [Solution]>,
}

/// Mean normalized metric@1 over the validation tasks when suggesting with
/// `k` as the only knowledge at temperature 0. A task whose suggestion fails
/// scores 0.
pub fn validate_candidate(
    ctx: &ValidationContext<'_>,
    k: &KnowledgeItem,
    backend: &dyn LlmBackend,
) -> Result<f64> {
    if ctx.val_tasks.is_empty() {
        return Err(Error::Config("no validation tasks".into()));
    }
    let cfg = SuggestionConfig {
        temperature: 0.0,
        ..ctx.suggestion.clone()
    };
    let knowledge = std::slice::from_ref(k);
    let copilot = Copilot {
        space: ctx.space,
        discretizers: ctx.discretizers,
        pool: ctx.pool,
        knowledge,
        backend,
        config: &cfg,
    };
    let mut total = 0.0;
    for task in ctx.val_tasks {
        total += score_first(&copilot, ctx, task).unwrap_or(0.0);
    }
    Ok(total / ctx.val_tasks.len() as f64)
}

fn score_first(copilot: &Copilot<'_>, ctx: &ValidationContext<'_>, task: &Task) -> Result<f64> {
    let mut exclude = ctx.exclude.clone();
    exclude.insert(task.task_id.clone());
    let set = copilot.suggest(task, &exclude, ctx.fallback)?;
    let first = set
        .solutions()
        .next()
        .ok_or_else(|| Error::InvalidInput("empty suggestion set".into()))?;
    let m = ctx.benchmark.evaluate_solution(&task.task_id, first)?;
    let m1 = metric_at_t(&[m], 1, ctx.benchmark.direction)?;
    ctx.benchmark.normalize(m1, &task.task_id)
}

/// One round of the elicitation loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub question: String,
    pub temperature: f64,
    pub task_ids: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidate: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub improved: bool,
}

/// What one round produced before the incumbent is updated.
pub struct RoundOutcome {
    pub question: String,
    pub temperature: f64,
    pub task_ids: Vec<String>,
    /// Candidate text and its validation score, or why the round failed.
    pub result: std::result::Result<(String, f64), String>,
}

/// The incumbent kept by [`run_rounds`].
#[derive(Debug, Clone, PartialEq)]
pub struct Incumbent {
    pub text: String,
    pub score: f64,
    pub provenance: Provenance,
}

/// The control flow of the elicitation loop over an arbitrary round function.
/// A round updates the incumbent only on a strictly better score; rounds
/// without improvement (failed ones included) add to the stagnation count,
/// and the loop stops once it exceeds `patience`.
pub fn run_rounds(
    rounds: usize,
    patience: usize,
    mut step: impl FnMut(usize) -> RoundOutcome,
) -> Result<(Incumbent, Vec<RoundTrace>)> {
    let mut best: Option<Incumbent> = None;
    let mut stagnation = 0usize;
    let mut trace = Vec::new();
    for round in 1..=rounds {
        let out = step(round);
        let mut t = RoundTrace {
            round,
            question: out.question.clone(),
            temperature: out.temperature,
            task_ids: out.task_ids,
            candidate: None,
            score: None,
            error: None,
            improved: false,
        };
        match out.result {
            Ok((text, score)) => {
                if best.as_ref().is_none_or(|b| score > b.score) {
                    best = Some(Incumbent {
                        text: text.clone(),
                        score,
                        provenance: Provenance {
                            question: out.question,
                            temperature: out.temperature,
                            round,
                        },
                    });
                    stagnation = 0;
                    t.improved = true;
                } else {
                    stagnation += 1;
                }
                t.candidate = Some(text);
                t.score = Some(score);
            }
            Err(e) => {
                stagnation += 1;
                t.error = Some(e);
            }
        }
        trace.push(t);
        if stagnation > patience {
            break;
        }
    }
    match best {
        Some(b) => Ok((b, trace)),
        None => Err(Error::ElicitationFailed { trace }),
    }
}

/// Runs the elicitation loop for one space. `pool` holds the tasks whose
/// experience may be shown to the model; candidates are scored with
/// [`validate_candidate`].
pub fn elicit_knowledge(
    pool: &[PoolEntry],
    ctx: &ValidationContext<'_>,
    cfg: &ElicitationConfig,
    backend: &dyn LlmBackend,
    rng: &mut StreamRng,
) -> Result<(KnowledgeItem, Vec<RoundTrace>)> {
    cfg.validate()?;
    let usable: Vec<&PoolEntry> = pool
        .iter()
        .filter(|e| e.task.space_id == ctx.space.space_id && !e.experiences.is_empty())
        .collect();
    if usable.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no experience for space `{}` to elicit from",
            ctx.space.space_id
        )));
    }
    let (best, trace) = run_rounds(cfg.rounds, cfg.patience, |round| {
        let n = cfg.tasks_per_prompt.min(usable.len());
        let chosen: Vec<&PoolEntry> = sample(rng, usable.len(), n)
            .into_iter()
            .map(|i| usable[i])
            .collect();
        let question = cfg.questions[rng.random_range(0..cfg.questions.len())].clone();
        let temperature: f64 = rng.random();
        let task_ids = chosen.iter().map(|e| e.task.task_id.clone()).collect();
        let result = (|| {
            let blocks: Vec<DemoBlock> = chosen
                .iter()
                .map(|e| DemoBlock::from_entry(e, cfg.demos_per_task))
                .collect();
            let prompt = build_elicitation_prompt(ctx.space, &blocks, &question)?;
            let req =
                CompletionRequest::new(prompt, temperature)?.with_max_tokens(cfg.max_tokens)?;
            let text = backend.complete(&req)?.trim().to_string();
            if text.is_empty() {
                return Err(Error::Backend("empty knowledge candidate".into()));
            }
            let item = KnowledgeItem {
                space_id: ctx.space.space_id.clone(),
                text: text.clone(),
                validation_score: 0.0,
                provenance: Provenance {
                    question: question.clone(),
                    temperature,
                    round,
                },
            };
            let score = validate_candidate(ctx, &item, backend)?;
            Ok((text, score))
        })();
        RoundOutcome {
            question,
            temperature,
            task_ids,
            result: result.map_err(|e: Error| e.to_string()),
        }
    })?;
    let item = KnowledgeItem {
        space_id: ctx.space.space_id.clone(),
        text: best.text,
        validation_score: best.score,
        provenance: best.provenance,
    };
    Ok((item, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scripted(scores: &[f64]) -> impl FnMut(usize) -> RoundOutcome + '_ {
        move |round| RoundOutcome {
            question: "q".into(),
            temperature: 0.5,
            task_ids: vec![],
            result: Ok((format!("candidate {round}"), scores[round - 1])),
        }
    }

    #[test]
    fn stops_after_patience_is_exceeded() {
        let scores = [0.2, 0.5, 0.5, 0.3, 0.4, 0.9, 0.9];
        let (best, trace) = run_rounds(7, 2, scripted(&scores)).unwrap();
        assert_eq!(trace.len(), 5);
        assert_eq!(best.text, "candidate 2");
        assert_eq!(best.score, 0.5);
        assert_eq!(best.provenance.round, 2);
    }

    #[test]
    fn single_round_and_strict_improvement() {
        let (best, trace) = run_rounds(1, 0, scripted(&[0.1])).unwrap();
        assert_eq!((trace.len(), best.provenance.round), (1, 1));
        let up = [0.1, 0.2, 0.3, 0.4];
        let (best, trace) = run_rounds(4, 0, scripted(&up)).unwrap();
        assert_eq!((trace.len(), best.provenance.round), (4, 4));
    }

    #[test]
    fn all_failures_carry_the_trace() {
        let err = run_rounds(3, 5, |_| RoundOutcome {
            question: "q".into(),
            temperature: 0.1,
            task_ids: vec![],
            result: Err("down".into()),
        })
        .unwrap_err();
        match err {
            Error::ElicitationFailed { trace } => assert_eq!(trace.len(), 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn split_sizes() {
        let tasks: Vec<Task> = (0..12)
            .map(|i| Task::new(&format!("t{i}"), "s", "d").unwrap())
            .collect();
        let refs: Vec<&Task> = tasks.iter().collect();
        let (train, val) = split_validation(&refs, 0.1, 1).unwrap();
        assert_eq!((train.len(), val.len()), (10, 2));
        assert_eq!(split_validation(&refs[..10], 0.1, 1).unwrap().1.len(), 1);
        let again = split_validation(&refs, 0.1, 1).unwrap().1;
        assert_eq!(val, again);
        assert!(split_validation(&refs[..1], 0.1, 1).is_err());
    }

    #[test]
    fn questions_carry_the_marker() {
        for q in DEFAULT_QUESTIONS {
            assert!(q.to_lowercase().contains(crate::llm::ELICITATION_MARKER));
        }
    }
}
