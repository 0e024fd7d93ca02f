//! The online stage: retrieve demonstrations and knowledge, build a prompt
//! under a token budget, call the model once and turn its answer into
//! concrete in-space solutions.

use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::canonical::Discretizers;
use crate::error::{Error, OffendingClause, ParseError, Result};
use crate::llm::{CompletionRequest, LlmBackend, DEFAULT_MAX_TOKENS, DEFAULT_STOP};
use crate::retrieval::{retrieve_experience, retrieve_knowledge, KnowledgeItem, PoolEntry};
use crate::space::{
    normalize_words, DiscreteSolution, DiscreteValue, Domain, ParamValue, Solution, SolutionSpace,
    Task,
};

/// Temperature of the single repair call made when a response under-fills.
pub const REPAIR_TEMPERATURE: f64 = 0.7;

pub const DEFAULT_INSTRUCTION: &str =
    "recommend {n} hyper-parameter configurations for a new {kind} dataset";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TaskCount {
    Count(usize),
    #[default]
    FillBudget,
}

impl Serialize for TaskCount {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TaskCount::Count(k) => s.serialize_u64(*k as u64),
            TaskCount::FillBudget => s.serialize_str("fill-budget"),
        }
    }
}

impl<'de> Deserialize<'de> for TaskCount {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(usize),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(0) => Err(serde::de::Error::custom("k_tasks must be at least 1")),
            Raw::N(k) => Ok(TaskCount::Count(k)),
            Raw::S(s) if s == "fill-budget" => Ok(TaskCount::FillBudget),
            Raw::S(s) => Err(serde::de::Error::custom(format!(
                "k_tasks must be a count or \"fill-budget\", got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuggestionConfig {
    pub n_suggestions: usize,
    pub k_tasks: TaskCount,
    pub demos_per_task: usize,
    pub token_budget: usize,
    pub temperature: f64,
    /// Word substituted for `{kind}` in the instruction ("classification", "detection", ...).
    pub task_kind: String,
    /// Instruction body with `{n}` and `{kind}` placeholders.
    pub instruction: String,
    pub chars_per_token: f64,
    pub max_tokens: usize,
}

impl Default for SuggestionConfig {
    fn default() -> Self {
        SuggestionConfig {
            n_suggestions: 3,
            k_tasks: TaskCount::FillBudget,
            demos_per_task: 3,
            token_budget: 3000,
            temperature: 0.0,
            task_kind: "classification".to_string(),
            instruction: DEFAULT_INSTRUCTION.to_string(),
            chars_per_token: 4.0,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

impl SuggestionConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail
    pub fn validate(&self) -> Result<()> {
        if self.n_suggestions == 0 {
            return Err(Error::Config("n_suggestions must be at least 1".into()));
        }
        if self.demos_per_task == 0 {
            return Err(Error::Config("demos_per_task must be at least 1".into()));
        }
        if self.token_budget < 256 {
            return Err(Error::Config(format!(
                "token_budget must be at least 256, got {}",
                self.token_budget
            )));
        }
        if !(0.0..=1.0).contains(&self.temperature) {
            return Err(Error::Config("temperature must lie in [0, 1]".into()));
        }
        if !(self.chars_per_token > 0.0) {
            return Err(Error::Config("chars_per_token must be positive".into()));
        }
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be at least 1".into()));
        }
        Ok(())
    }
}

/// Token estimate used for budgeting: characters divided by `chars_per_token`, rounded up.
pub fn estimate_tokens(text: &str, chars_per_token: f64) -> usize {
    (text.chars().count() as f64 / chars_per_token).ceil() as usize
}

/// One demonstrated task: its description and verbalized configurations, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoBlock {
    pub description: String,
    pub configurations: Vec<String>,
}

impl DemoBlock {
    pub fn from_entry(entry: &PoolEntry, demos_per_task: usize) -> Self {
        DemoBlock {
            description: entry.task.description.clone(),
            configurations: entry
                .experiences
                .iter()
                .take(demos_per_task)
                .map(|e| e.solution_text.clone())
                .collect(),
        }
    }

    pub fn render(&self) -> String {
        let mut s = format!("Dataset: {}", self.description);
        for (i, c) in self.configurations.iter().enumerate() {
            s.push_str(&format!("\nConfiguration {}: {}", i + 1, c));
        }
        s
    }
}

fn numbering_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?:\d+\s*[.):]|[-*•])\s*").unwrap())
}

/// Splits knowledge texts into guideline sentences, dropping any numbering or
/// bullets the model produced.
pub fn guideline_lines(knowledge: &[&KnowledgeItem]) -> Vec<String> {
    knowledge
        .iter()
        .flat_map(|k| k.text.lines())
        .map(|l| numbering_re().replace(l.trim(), "").trim().to_string())
        .filter(|l| !l.is_empty())
        .collect()
}

fn instruction(cfg: &SuggestionConfig, has_demos: bool, has_knowledge: bool) -> String {
    let body = cfg
        .instruction
        .replace("{n}", &cfg.n_suggestions.to_string())
        .replace("{kind}", &cfg.task_kind);
    let basis = match (has_demos, has_knowledge) {
        (true, true) => Some("examples and guidelines"),
        (true, false) => Some("examples"),
        (false, true) => Some("guidelines"),
        (false, false) => None,
    };
    match basis {
        Some(b) => format!("Based on the {b} above, {body}"),
        None => {
            let mut chars = body.chars();
            match chars.next() {
                Some(c) => c.to_uppercase().chain(chars).collect(),
                None => body,
            }
        }
    }
}

fn assemble(
    space: &SolutionSpace,
    task: &Task,
    demos: &[DemoBlock],
    guidelines: &[String],
    cfg: &SuggestionConfig,
) -> String {
    let mut sections = Vec::with_capacity(demos.len() + 4);
    sections.push(space.description.clone());
    sections.extend(demos.iter().map(DemoBlock::render));
    if !guidelines.is_empty() {
        let mut g = String::from("Guidelines:");
        for (i, line) in guidelines.iter().enumerate() {
            g.push_str(&format!("\n{}. {}", i + 1, line));
        }
        sections.push(g);
    }
    sections.push(instruction(cfg, !demos.is_empty(), !guidelines.is_empty()));
    sections.push(format!("Dataset: {}", task.description));
    sections.join("\n\n")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuggestionPrompt {
    pub text: String,
    /// How many of the offered demonstration blocks fit the budget.
    pub demos_used: usize,
}

/// Builds the online prompt. Demonstrations are taken in the given order
/// (most similar first) while the estimate stays within `cfg.token_budget`.
pub fn build_suggestion_prompt(
    space: &SolutionSpace,
    task: &Task,
    demos: &[DemoBlock],
    knowledge: &[&KnowledgeItem],
    cfg: &SuggestionConfig,
) -> Result<SuggestionPrompt> {
    let guidelines = guideline_lines(knowledge);
    let bare = assemble(space, task, &[], &guidelines, cfg);
    let needed = estimate_tokens(&bare, cfg.chars_per_token);
    if needed > cfg.token_budget {
        return Err(Error::BudgetExhausted {
            needed,
            budget: cfg.token_budget,
        });
    }
    let mut text = bare;
    let mut used = 0;
    for i in 1..=demos.len() {
        let candidate = assemble(space, task, &demos[..i], &guidelines, cfg);
        if estimate_tokens(&candidate, cfg.chars_per_token) > cfg.token_budget {
            break;
        }
        text = candidate;
        used = i;
    }
    Ok(SuggestionPrompt {
        text,
        demos_used: used,
    })
}

fn configuration_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*configuration\s*(\d+)\s*:(.*)$").unwrap())
}

/// Parses `Configuration <i>: <name> is <value>. ...` lines into discrete
/// solutions, at most `expected_n` of them. Any offending clause in those
/// lines fails the whole parse.
pub fn parse_solutions(
    response: &str,
    space: &SolutionSpace,
    expected_n: usize,
) -> std::result::Result<Vec<DiscreteSolution>, ParseError> {
    let mut out = Vec::new();
    let mut offending = Vec::new();
    let lines = response
        .lines()
        .filter_map(|l| configuration_re().captures(l))
        .take(expected_n);
    for (idx, caps) in lines.enumerate() {
        let config_no = idx + 1;
        let body = caps[2].trim();
        let mut parsed = DiscreteSolution::new();
        let mut bad = false;
        let mut flag = |clause: &str, reason: String, bad: &mut bool| {
            *bad = true;
            offending.push(OffendingClause {
                configuration: config_no,
                clause: clause.to_string(),
                reason,
            });
        };
        for clause in body.split(". ") {
            let clause = clause.trim().trim_end_matches('.').trim();
            if clause.is_empty() {
                continue;
            }
            let lower = clause.to_lowercase();
            let Some(pos) = lower.find(" is ") else {
                flag(clause, "expected `<name> is <value>`".into(), &mut bad);
                continue;
            };
            let (name, value) = (&clause[..pos], &clause[pos + 4..]);
            let Some(param) = space.lookup(name) else {
                flag(
                    clause,
                    format!("unknown parameter {:?}", name.trim()),
                    &mut bad,
                );
                continue;
            };
            let dv = match &param.domain {
                Domain::Numeric { .. } => space.parse_level(value).map(DiscreteValue::Level),
                Domain::Categorical { .. } => param
                    .resolve_choice(value)
                    .map(|c| DiscreteValue::Choice(c.to_string())),
            };
            let Some(dv) = dv else {
                flag(
                    clause,
                    format!(
                        "unknown value {:?} for `{}`",
                        normalize_words(value),
                        param.name
                    ),
                    &mut bad,
                );
                continue;
            };
            if parsed.insert(param.name.clone(), dv).is_some() {
                flag(
                    clause,
                    format!("duplicate parameter `{}`", param.name),
                    &mut bad,
                );
            }
        }
        if bad {
            continue;
        }
        let choice_of = |n: &str| match parsed.get(n) {
            Some(DiscreteValue::Choice(c)) => Some(c.as_str()),
            _ => None,
        };
        let active: Vec<&str> = space
            .parameters
            .iter()
            .filter(|p| space.is_active(p, choice_of))
            .map(|p| p.name.as_str())
            .collect();
        let missing: Vec<&str> = active
            .iter()
            .copied()
            .filter(|n| !parsed.contains_key(*n))
            .collect();
        if !missing.is_empty() {
            flag(body, format!("missing parameters {missing:?}"), &mut bad);
            continue;
        }
        parsed.retain(|k, _| active.contains(&k.as_str()));
        out.push(parsed);
    }
    if out.is_empty() || !offending.is_empty() {
        return Err(ParseError { offending });
    }
    Ok(out)
}

/// Maps levels back to numbers through the discretizers' representatives.
pub fn concretize(
    discrete: &DiscreteSolution,
    space: &SolutionSpace,
    discretizers: &Discretizers,
) -> Result<Solution> {
    let choice_of = |n: &str| match discrete.get(n) {
        Some(DiscreteValue::Choice(c)) => Some(c.as_str()),
        _ => None,
    };
    let mut values = std::collections::BTreeMap::new();
    for p in &space.parameters {
        if !space.is_active(p, choice_of) {
            continue;
        }
        let v = discrete
            .get(&p.name)
            .ok_or_else(|| Error::MissingParameter(p.name.clone()))?;
        let pv = match (&p.domain, v) {
            (Domain::Numeric { lo, hi, .. }, DiscreteValue::Level(l)) => {
                let d = discretizers.get(&p.name).ok_or_else(|| {
                    Error::InvalidInput(format!("no discretizer for parameter `{}`", p.name))
                })?;
                ParamValue::Number(d.representative_level(*l).clamp(*lo, *hi))
            }
            (Domain::Categorical { .. }, DiscreteValue::Choice(c)) => ParamValue::Choice(c.clone()),
            _ => {
                return Err(Error::InvalidSolution(format!(
                    "value kind does not match parameter `{}`",
                    p.name
                )))
            }
        };
        values.insert(p.name.clone(), pv);
    }
    Solution::new(space, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionSource {
    Primary,
    Repair,
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suggestion {
    pub discrete: Option<DiscreteSolution>,
    pub solution: Solution,
    pub source: SuggestionSource,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Telemetry {
    pub primary_calls: usize,
    pub repair_calls: usize,
    pub fallback_filled: usize,
    pub demos_used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuggestionSet {
    pub task_id: String,
    pub suggestions: Vec<Suggestion>,
    pub prompt: String,
    pub raw_response: String,
    pub repair_response: Option<String>,
    pub telemetry: Telemetry,
}

impl SuggestionSet {
    pub fn solutions(&self) -> impl Iterator<Item = &Solution> {
        self.suggestions.iter().map(|s| &s.solution)
    }
}

/// Everything the online stage needs besides the query task.
pub struct Copilot<'a> {
    pub space: &'a SolutionSpace,
    pub discretizers: &'a Discretizers,
    pub pool: &'a [PoolEntry],
    pub knowledge: &'a [KnowledgeItem],
    pub backend: &'a dyn LlmBackend,
    pub config: &'a SuggestionConfig,
}

impl Copilot<'_> {
    /// Builds the prompt the model would see for `task`.
    pub fn prompt_for(&self, task: &Task, exclude: &HashSet<String>) -> Result<SuggestionPrompt> {
        let cfg = self.config;
        cfg.validate()?;
        if task.space_id != self.space.space_id {
            return Err(Error::InvalidInput(format!(
                "task `{}` is in space `{}`, not `{}`",
                task.task_id, task.space_id, self.space.space_id
            )));
        }
        let demos: Vec<DemoBlock> = if self.pool.is_empty() {
            Vec::new()
        } else {
            let query = self.backend.embed(&task.description)?;
            let k = match cfg.k_tasks {
                TaskCount::Count(k) => k,
                TaskCount::FillBudget => self.pool.len(),
            };
            retrieve_experience(&query, self.pool, k, exclude)?
                .iter()
                .filter(|r| !r.entry.experiences.is_empty())
                .map(|r| DemoBlock::from_entry(r.entry, cfg.demos_per_task))
                .collect()
        };
        let knowledge = retrieve_knowledge(&self.space.space_id, self.knowledge);
        build_suggestion_prompt(self.space, task, &demos, &knowledge, cfg)
    }

    /// One primary completion; if it yields fewer than `n_suggestions`
    /// solutions, one repair completion, then `fallback` fills what is left.
    pub fn suggest(
        &self,
        task: &Task,
        exclude: &HashSet<String>,
        fallback: Option<&[Solution]>,
    ) -> Result<SuggestionSet> {
        let cfg = self.config;
        let prompt = self.prompt_for(task, exclude)?;
        let mut telemetry = Telemetry {
            demos_used: prompt.demos_used,
            ..Telemetry::default()
        };
        let request = CompletionRequest::new(prompt.text.clone(), cfg.temperature)?
            .with_max_tokens(cfg.max_tokens)?
            .with_stop(Some(vec![DEFAULT_STOP.to_string()]));

        telemetry.primary_calls += 1;
        let raw = self.backend.complete(&request)?;
        let mut suggestions = Vec::with_capacity(cfg.n_suggestions);
        let mut last_error = None;
        self.absorb(
            &raw,
            SuggestionSource::Primary,
            &mut suggestions,
            &mut last_error,
        );

        let mut repair_response = None;
        if suggestions.len() < cfg.n_suggestions {
            let repair = CompletionRequest {
                temperature: REPAIR_TEMPERATURE,
                ..request
            };
            telemetry.repair_calls += 1;
            let text = self.backend.complete(&repair)?;
            self.absorb(
                &text,
                SuggestionSource::Repair,
                &mut suggestions,
                &mut last_error,
            );
            repair_response = Some(text);
        }

        if suggestions.len() < cfg.n_suggestions {
            let Some(fallback) = fallback.filter(|f| !f.is_empty()) else {
                return Err(match last_error {
                    Some(e) => e,
                    None => Error::Parse(ParseError { offending: vec![] }),
                });
            };
            let mut extra: Vec<&Solution> = fallback
                .iter()
                .filter(|s| !suggestions.iter().any(|x: &Suggestion| &x.solution == *s))
                .collect();
            if extra.is_empty() {
                extra = fallback.iter().collect();
            }
            for s in extra.into_iter().cycle() {
                if suggestions.len() >= cfg.n_suggestions {
                    break;
                }
                suggestions.push(Suggestion {
                    discrete: None,
                    solution: s.clone(),
                    source: SuggestionSource::Fallback,
                });
                telemetry.fallback_filled += 1;
            }
        }

        Ok(SuggestionSet {
            task_id: task.task_id.clone(),
            suggestions,
            prompt: prompt.text,
            raw_response: raw,
            repair_response,
            telemetry,
        })
    }

    fn absorb(
        &self,
        response: &str,
        source: SuggestionSource,
        into: &mut Vec<Suggestion>,
        last_error: &mut Option<Error>,
    ) {
        let want = self.config.n_suggestions - into.len();
        match parse_solutions(response, self.space, want) {
            Ok(parsed) => {
                for d in parsed {
                    match concretize(&d, self.space, self.discretizers) {
                        Ok(solution) => into.push(Suggestion {
                            discrete: Some(d),
                            solution,
                            source,
                        }),
                        Err(e) => *last_error = Some(e),
                    }
                }
            }
            Err(e) => *last_error = Some(Error::Parse(e)),
        }
    }
}
