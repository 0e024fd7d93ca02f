//! Leave-one-out evaluation over a benchmark.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baselines::{baseline_constant, baseline_nearest_task, baseline_random};
use super::metrics::metric_at_t;
use super::Benchmark;
use crate::canonical::Discretizers;
use crate::elicitation::{
    elicit_knowledge, split_validation, ElicitationConfig, ValidationContext,
};
use crate::error::{Error, Result};
use crate::llm::{LlmBackend, Observed};
use crate::pool::build_pool;
use crate::rng::substream;
use crate::space::{Solution, Task};
use crate::suggestion::{Copilot, SuggestionConfig};

/// Suggestions made per held-out task; metric@t is reported for t = 1..=3.
pub const ATTEMPTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Random,
    Constant,
    Nearest,
    Copilot,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Random,
        Method::Constant,
        Method::Nearest,
        Method::Copilot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::Constant => "constant",
            Method::Nearest => "nearest",
            Method::Copilot => "copilot",
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method {s:?}; expected one of random, constant, nearest, copilot"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub suggestion: SuggestionConfig,
    pub elicitation: ElicitationConfig,
    /// Skip the elicitation loop and suggest from experience alone.
    pub skip_elicitation: bool,
    pub n_levels: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            suggestion: SuggestionConfig::default(),
            elicitation: ElicitationConfig::default(),
            skip_elicitation: false,
            n_levels: 5,
        }
    }
}

/// Outcome of one method on one held-out task under one seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskResult {
    pub method: Method,
    pub seed: u64,
    pub task_id: String,
    /// metric@1..=3.
    pub metric_at: [f64; ATTEMPTS],
    pub nacc_at: [f64; ATTEMPTS],
    pub failed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Held-out identifiers or descriptions found where they must not be.
    pub hygiene_violations: Vec<String>,
    /// The raw suggestions, in order.
    #[serde(skip)]
    pub suggestions: Vec<Solution>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Standard deviation of the per-seed means.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub method: Method,
    pub seeds: Vec<u64>,
    pub tasks: usize,
    pub failures: usize,
    pub hygiene_violations: usize,
    pub metric_at: [MeanStd; ATTEMPTS],
    pub nacc_at: [MeanStd; ATTEMPTS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: Method,
    pub seeds: Vec<u64>,
    /// Seed-major, then benchmark task order.
    pub results: Vec<TaskResult>,
}

pub const CSV_HEADER: &str =
    "method,seed,task_id,metric@1,metric@2,metric@3,nacc@1,nacc@2,nacc@3,failed";

impl EvalReport {
    pub fn hygiene_violations(&self) -> usize {
        self.results
            .iter()
            .map(|r| r.hygiene_violations.len())
            .sum()
    }

    pub fn failures(&self) -> usize {
        self.results.iter().filter(|r| r.failed).count()
    }

    /// Mean of nacc@t over all tasks and seeds.
    pub fn mean_nacc(&self, t: usize) -> f64 {
        mean(self.results.iter().map(|r| r.nacc_at[t - 1]))
    }

    pub fn summary(&self) -> Summary {
        let stat = |f: &dyn Fn(&TaskResult) -> f64| {
            let per_seed: Vec<f64> = self
                .seeds
                .iter()
                .map(|s| mean(self.results.iter().filter(|r| r.seed == *s).map(f)))
                .collect();
            let m = mean(per_seed.iter().copied());
            let var = mean(per_seed.iter().map(|x| (x - m).powi(2)));
            MeanStd {
                mean: mean(self.results.iter().map(f)),
                std: var.sqrt(),
            }
        };
        Summary {
            method: self.method,
            seeds: self.seeds.clone(),
            tasks: self.results.len() / self.seeds.len().max(1),
            failures: self.failures(),
            hygiene_violations: self.hygiene_violations(),
            metric_at: std::array::from_fn(|i| stat(&|r| r.metric_at[i])),
            nacc_at: std::array::from_fn(|i| stat(&|r| r.nacc_at[i])),
        }
    }

    /// CSV rows without the header.
    pub fn csv_rows(&self) -> String {
        let mut s = String::new();
        for r in &self.results {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.method.name(),
                r.seed,
                r.task_id,
                r.metric_at[0],
                r.metric_at[1],
                r.metric_at[2],
                r.nacc_at[0],
                r.nacc_at[1],
                r.nacc_at[2],
                r.failed
            );
        }
        s
    }
}

/// Header plus the rows of every report, in the given order.
pub fn reports_to_csv(reports: &[EvalReport]) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for r in reports {
        s.push_str(&r.csv_rows());
    }
    s
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Holds out each task (with its twins) in turn, runs `method` on the rest
/// and scores its suggestions on the held-out task. Folds run in parallel;
/// results are assembled in seed then task order.
pub fn run_loo_eval(
    b: &Benchmark,
    method: Method,
    seeds: &[u64],
    cfg: &EvalConfig,
    backend: &dyn LlmBackend,
) -> Result<EvalReport> {
    if b.tasks.len() < 2 {
        return Err(Error::Config("leave-one-out needs at least 2 tasks".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    cfg.suggestion.validate()?;
    if method == Method::Copilot && !cfg.skip_elicitation {
        cfg.elicitation.validate()?;
    }
    let suggestion = SuggestionConfig {
        n_suggestions: ATTEMPTS,
        ..cfg.suggestion.clone()
    };
    let cfg = EvalConfig {
        suggestion,
        ..cfg.clone()
    };
    let jobs: Vec<(u64, &Task)> = seeds
        .iter()
        .flat_map(|s| b.tasks.iter().map(move |t| (*s, t)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|(seed, task)| run_fold(b, method, *seed, task, &cfg, backend))
        .collect();
    Ok(EvalReport {
        method,
        seeds: seeds.to_vec(),
        results,
    })
}

fn run_fold(
    b: &Benchmark,
    method: Method,
    seed: u64,
    task: &Task,
    cfg: &EvalConfig,
    backend: &dyn LlmBackend,
) -> TaskResult {
    let held = b.held_out_with(&task.task_id);
    let observed = Observed::new(backend);
    let outcome =
        suggest_for(b, method, seed, task, &held, cfg, &observed).and_then(|(sols, knowledge)| {
            let metrics = sols
                .iter()
                .map(|s| b.evaluate_solution(&task.task_id, s))
                .collect::<Result<Vec<_>>>()?;
            if metrics.len() < ATTEMPTS {
                return Err(Error::InvalidInput(format!(
                    "{} produced {} of {ATTEMPTS} suggestions",
                    method.name(),
                    metrics.len()
                )));
            }
            Ok((sols, metrics, knowledge))
        });

    let mut violations = Vec::new();
    let needles: Vec<String> = held
        .iter()
        .filter_map(|id| b.task(id))
        .flat_map(|t| [t.task_id.clone(), t.description.clone()])
        .collect();
    let query_suffix = format!("\n\nDataset: {}", task.description);
    let mut scan = |where_: &str, text: &str| {
        for n in &needles {
            if text.contains(n.as_str()) {
                violations.push(format!("{where_} contains {n:?}"));
            }
        }
    };
    for (i, req) in observed.requests().iter().enumerate() {
        let body = req
            .prompt
            .strip_suffix(&query_suffix)
            .unwrap_or(&req.prompt);
        scan(&format!("prompt {}", i + 1), body);
    }
    if let Ok((_, _, knowledge)) = &outcome {
        for k in knowledge {
            scan("knowledge", k);
        }
    }

    let bounds = b
        .norm_bounds(&task.task_id)
        .expect("bounds exist for every task");
    match outcome {
        Ok((sols, metrics, _)) => {
            let metric_at: [f64; ATTEMPTS] = std::array::from_fn(|i| {
                metric_at_t(&metrics, i + 1, b.direction).expect("enough metrics")
            });
            TaskResult {
                method,
                seed,
                task_id: task.task_id.clone(),
                metric_at,
                nacc_at: metric_at.map(|m| super::normalize_accuracy(m, bounds, b.direction)),
                failed: false,
                error: None,
                hygiene_violations: violations,
                suggestions: sols,
            }
        }
        Err(e) => {
            let worst = match b.direction {
                crate::space::Direction::HigherBetter => bounds.0,
                crate::space::Direction::LowerBetter => bounds.1,
            };
            TaskResult {
                method,
                seed,
                task_id: task.task_id.clone(),
                metric_at: [worst; ATTEMPTS],
                nacc_at: [0.0; ATTEMPTS],
                failed: true,
                error: Some(e.to_string()),
                hygiene_violations: violations,
                suggestions: Vec::new(),
            }
        }
    }
}

/// Suggestions for the held-out task, plus any knowledge texts produced on the way.
fn suggest_for(
    b: &Benchmark,
    method: Method,
    seed: u64,
    task: &Task,
    held: &HashSet<String>,
    cfg: &EvalConfig,
    backend: &dyn LlmBackend,
) -> Result<(Vec<Solution>, Vec<String>)> {
    let train: Vec<&Task> = b
        .tasks
        .iter()
        .filter(|t| !held.contains(&t.task_id))
        .collect();
    if train.is_empty() {
        return Err(Error::InvalidInput("no training tasks left".into()));
    }
    let train_ids: Vec<&str> = train.iter().map(|t| t.task_id.as_str()).collect();
    match method {
        Method::Random => Ok((baseline_random(b, &task.task_id, ATTEMPTS, seed), vec![])),
        Method::Constant => Ok((baseline_constant(b, &train_ids, ATTEMPTS)?, vec![])),
        Method::Nearest => Ok((baseline_nearest_task(b, &train, task, ATTEMPTS)?, vec![])),
        Method::Copilot => copilot_fold(b, seed, task, held, &train, &train_ids, cfg, backend),
    }
}

#[allow(clippy::too_many_arguments)]
fn copilot_fold(
    b: &Benchmark,
    seed: u64,
    task: &Task,
    held: &HashSet<String>,
    train: &[&Task],
    train_ids: &[&str],
    cfg: &EvalConfig,
    backend: &dyn LlmBackend,
) -> Result<(Vec<Solution>, Vec<String>)> {
    let train_set: HashSet<String> = train_ids.iter().map(|s| s.to_string()).collect();
    let records = b.records(&train_set);
    let discretizers = Discretizers::fit(&b.space, &records, b.direction, cfg.n_levels)?;
    let train_tasks: Vec<Task> = train.iter().map(|t| (*t).clone()).collect();
    let pool = build_pool(
        &b.space,
        &train_tasks,
        &records,
        &discretizers,
        b.direction,
        backend,
        &HashMap::new(),
    )?;
    let fallback = baseline_constant(b, train_ids, ATTEMPTS)?;

    let mut knowledge = Vec::new();
    if !cfg.skip_elicitation {
        let fold_seed = seed ^ fnv(&task.task_id);
        let (elicit_tasks, val_tasks) =
            split_validation(train, cfg.elicitation.val_fraction, fold_seed)?;
        let elicit_ids: HashSet<&str> = elicit_tasks.iter().map(|t| t.task_id.as_str()).collect();
        let elicit_pool: Vec<_> = pool
            .iter()
            .filter(|e| elicit_ids.contains(e.task.task_id.as_str()))
            .cloned()
            .collect();
        let mut exclude = held.clone();
        exclude.extend(val_tasks.iter().map(|t| t.task_id.clone()));
        let ctx = ValidationContext {
            space: &b.space,
            discretizers: &discretizers,
            pool: &elicit_pool,
            benchmark: b,
            suggestion: &cfg.suggestion,
            val_tasks: &val_tasks,
            exclude: &exclude,
            fallback: Some(&fallback),
        };
        let mut rng = substream(fold_seed, "elicit");
        let (item, _trace) =
            elicit_knowledge(&elicit_pool, &ctx, &cfg.elicitation, backend, &mut rng)?;
        knowledge.push(item);
    }

    let copilot = Copilot {
        space: &b.space,
        discretizers: &discretizers,
        pool: &pool,
        knowledge: &knowledge,
        backend,
        config: &cfg.suggestion,
    };
    let set = copilot.suggest(task, held, Some(&fallback))?;
    let texts = knowledge.into_iter().map(|k| k.text).collect();
    Ok((set.solutions().cloned().collect(), texts))
}

fn fnv(s: &str) -> u64 {
    crate::retrieval::fnv1a(s.as_bytes())
}

/// Aggregate JSON document for a set of reports.
pub fn summaries_json(benchmark: &str, reports: &[EvalReport]) -> serde_json::Value {
    let summaries: BTreeMap<&str, Summary> = reports
        .iter()
        .map(|r| (r.method.name(), r.summary()))
        .collect();
    serde_json::json!({ "benchmark": benchmark, "methods": summaries })
}
