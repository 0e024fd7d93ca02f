//! Solution spaces, tasks, solutions and experience records.
//!
//! Every [`Solution`] is built through [`Solution::new`], which checks it against
//! its [`SolutionSpace`]: numeric values inside their range, categorical values
//! among the declared choices, and exactly the active parameters present.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The five ordinal levels numeric values are discretized into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    VeryLow,
    Low,
    Medium,
    High,
    VeryHigh,
}

impl Level {
    pub const ALL: [Level; 5] = [
        Level::VeryLow,
        Level::Low,
        Level::Medium,
        Level::High,
        Level::VeryHigh,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(ordinal: usize) -> Option<Level> {
        Level::ALL.get(ordinal).copied()
    }

    pub fn label(self) -> &'static str {
        DEFAULT_LEVEL_NAMES[self.ordinal()]
    }

    /// Parses one of the canonical labels ("very low" .. "very high").
    pub fn from_label(label: &str) -> Result<Level> {
        let norm = normalize_words(label);
        DEFAULT_LEVEL_NAMES
            .iter()
            .position(|l| *l == norm)
            .map(|i| Level::ALL[i])
            .ok_or_else(|| Error::UnknownLevel(label.to_string()))
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for Level {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Level {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Level::from_label(&s).map_err(serde::de::Error::custom)
    }
}

pub const DEFAULT_LEVEL_NAMES: [&str; 5] = ["very low", "low", "medium", "high", "very high"];

/// Lowercases and collapses internal whitespace.
pub(crate) fn normalize_words(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Activation condition for a conditional parameter: the parameter only exists
/// when the referenced categorical parameter takes one of the listed choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub parameter: String,
    #[serde(rename = "in")]
    pub one_of: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Numeric { lo: f64, hi: f64, log_scale: bool },
    Categorical { choices: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParameterDef", into = "RawParameterDef")]
pub struct ParameterDef {
    pub name: String,
    pub domain: Domain,
    pub active_when: Option<Condition>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ParamKind {
    Numeric,
    Categorical,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParameterDef {
    name: String,
    kind: ParamKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    numeric_range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    log_scale: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    choices: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    active_when: Option<Condition>,
}

impl TryFrom<RawParameterDef> for ParameterDef {
    type Error = Error;

    fn try_from(raw: RawParameterDef) -> Result<Self> {
        let domain = match raw.kind {
            ParamKind::Numeric => {
                if raw.choices.is_some() {
                    return Err(Error::InvalidSpace(format!(
                        "numeric parameter `{}` must not declare choices",
                        raw.name
                    )));
                }
                let [lo, hi] = raw.numeric_range.ok_or_else(|| {
                    Error::InvalidSpace(format!("parameter `{}` has no numeric_range", raw.name))
                })?;
                Domain::Numeric {
                    lo,
                    hi,
                    log_scale: raw.log_scale.unwrap_or(false),
                }
            }
            ParamKind::Categorical => {
                if raw.numeric_range.is_some() || raw.log_scale.is_some() {
                    return Err(Error::InvalidSpace(format!(
                        "categorical parameter `{}` must not declare a numeric range",
                        raw.name
                    )));
                }
                Domain::Categorical {
                    choices: raw.choices.unwrap_or_default(),
                }
            }
        };
        ParameterDef::new(raw.name, domain, raw.active_when)
    }
}

impl From<ParameterDef> for RawParameterDef {
    fn from(p: ParameterDef) -> Self {
        match p.domain {
            Domain::Numeric { lo, hi, log_scale } => RawParameterDef {
                name: p.name,
                kind: ParamKind::Numeric,
                numeric_range: Some([lo, hi]),
                log_scale: Some(log_scale),
                choices: None,
                active_when: p.active_when,
            },
            Domain::Categorical { choices } => RawParameterDef {
                name: p.name,
                kind: ParamKind::Categorical,
                numeric_range: None,
                log_scale: None,
                choices: Some(choices),
                active_when: p.active_when,
            },
        }
    }
}

impl ParameterDef {
    pub fn new(name: String, domain: Domain, active_when: Option<Condition>) -> Result<Self> {
        if name.trim().is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::InvalidSpace(format!(
                "parameter name {name:?} must be a non-empty identifier"
            )));
        }
        match &domain {
            Domain::Numeric { lo, hi, log_scale } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::InvalidSpace(format!(
                        "parameter `{name}` needs a finite range with lo < hi, got [{lo}, {hi}]"
                    )));
                }
                if *log_scale && *lo <= 0.0 {
                    return Err(Error::InvalidSpace(format!(
                        "log-scale parameter `{name}` needs a positive range"
                    )));
                }
            }
            Domain::Categorical { choices } => {
                if choices.is_empty() {
                    return Err(Error::InvalidSpace(format!(
                        "categorical parameter `{name}` has no choices"
                    )));
                }
                let mut seen = HashSet::new();
                for c in choices {
                    let norm = normalize_words(c);
                    if norm.is_empty() || c.contains(". ") || c.ends_with('.') {
                        return Err(Error::InvalidSpace(format!(
                            "choice {c:?} of `{name}` is empty or contains a sentence break"
                        )));
                    }
                    if !seen.insert(norm) {
                        return Err(Error::InvalidSpace(format!(
                            "duplicate choice {c:?} in `{name}`"
                        )));
                    }
                }
            }
        }
        Ok(ParameterDef {
            name,
            domain,
            active_when,
        })
    }

    pub fn numeric(name: &str, lo: f64, hi: f64, log_scale: bool) -> Result<Self> {
        ParameterDef::new(
            name.to_string(),
            Domain::Numeric { lo, hi, log_scale },
            None,
        )
    }

    pub fn categorical(name: &str, choices: &[&str]) -> Result<Self> {
        ParameterDef::new(
            name.to_string(),
            Domain::Categorical {
                choices: choices.iter().map(|c| c.to_string()).collect(),
            },
            None,
        )
    }

    pub fn when(mut self, parameter: &str, one_of: &[&str]) -> Self {
        self.active_when = Some(Condition {
            parameter: parameter.to_string(),
            one_of: one_of.iter().map(|c| c.to_string()).collect(),
        });
        self
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self.domain, Domain::Numeric { .. })
    }

    pub fn log_scale(&self) -> bool {
        matches!(
            self.domain,
            Domain::Numeric {
                log_scale: true,
                ..
            }
        )
    }

    /// Finds the declared choice matching `value` case-insensitively.
    pub fn resolve_choice(&self, value: &str) -> Option<&str> {
        match &self.domain {
            Domain::Categorical { choices } => {
                let norm = normalize_words(value);
                choices
                    .iter()
                    .find(|c| normalize_words(c) == norm)
                    .map(String::as_str)
            }
            Domain::Numeric { .. } => None,
        }
    }

    pub fn check_value(&self, value: &ParamValue) -> Result<()> {
        match (&self.domain, value) {
            (Domain::Numeric { lo, hi, .. }, ParamValue::Number(x)) => {
                if x.is_finite() && *x >= *lo && *x <= *hi {
                    Ok(())
                } else {
                    Err(Error::OutOfRange {
                        parameter: self.name.clone(),
                        value: *x,
                    })
                }
            }
            (Domain::Categorical { choices }, ParamValue::Choice(c)) => {
                if choices.contains(c) {
                    Ok(())
                } else {
                    Err(Error::InvalidSolution(format!(
                        "`{c}` is not a choice of `{}`",
                        self.name
                    )))
                }
            }
            (Domain::Numeric { .. }, ParamValue::Choice(c)) => Err(Error::InvalidSolution(
                format!("numeric parameter `{}` got text value {c:?}", self.name),
            )),
            (Domain::Categorical { .. }, ParamValue::Number(x)) => Err(Error::InvalidSolution(
                format!("categorical parameter `{}` got number {x}", self.name),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace")]
pub struct SolutionSpace {
    pub space_id: String,
    pub description: String,
    pub parameters: Vec<ParameterDef>,
    /// Per-space aliases for the five levels, used both when verbalizing and parsing.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level_names: Option<[String; 5]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpace {
    space_id: String,
    description: String,
    parameters: Vec<ParameterDef>,
    #[serde(default)]
    level_names: Option<[String; 5]>,
}

impl TryFrom<RawSpace> for SolutionSpace {
    type Error = Error;
    fn try_from(raw: RawSpace) -> Result<Self> {
        SolutionSpace::new(
            raw.space_id,
            raw.description,
            raw.parameters,
            raw.level_names,
        )
    }
}

impl SolutionSpace {
    pub fn new(
        space_id: String,
        description: String,
        parameters: Vec<ParameterDef>,
        level_names: Option<[String; 5]>,
    ) -> Result<Self> {
        if space_id.trim().is_empty() {
            return Err(Error::InvalidSpace("space_id is empty".into()));
        }
        if description.trim().is_empty() {
            return Err(Error::InvalidSpace(format!(
                "space `{space_id}` has an empty description"
            )));
        }
        if parameters.is_empty() {
            return Err(Error::InvalidSpace(format!(
                "space `{space_id}` has no parameters"
            )));
        }
        let mut seen = HashSet::new();
        for p in &parameters {
            if !seen.insert(p.name.to_lowercase()) {
                return Err(Error::InvalidSpace(format!(
                    "duplicate parameter `{}`",
                    p.name
                )));
            }
        }
        for p in &parameters {
            if let Some(cond) = &p.active_when {
                let parent = parameters
                    .iter()
                    .find(|q| q.name == cond.parameter && q.name != p.name)
                    .filter(|q| !q.is_numeric() && q.active_when.is_none())
                    .ok_or_else(|| {
                        Error::InvalidSpace(format!(
                            "`{}` depends on `{}`, which must be an unconditional categorical parameter",
                            p.name, cond.parameter
                        ))
                    })?;
                if cond.one_of.is_empty() {
                    return Err(Error::InvalidSpace(format!(
                        "condition of `{}` lists no choices",
                        p.name
                    )));
                }
                for c in &cond.one_of {
                    if parent.resolve_choice(c) != Some(c.as_str()) {
                        return Err(Error::InvalidSpace(format!(
                            "condition of `{}` references unknown choice {c:?} of `{}`",
                            p.name, parent.name
                        )));
                    }
                }
            }
        }
        if let Some(names) = &level_names {
            let mut seen = HashSet::new();
            for n in names {
                let norm = normalize_words(n);
                if norm.is_empty() || !seen.insert(norm) {
                    return Err(Error::InvalidSpace(format!(
                        "level names must be non-empty and distinct, got {names:?}"
                    )));
                }
            }
        }
        Ok(SolutionSpace {
            space_id,
            description,
            parameters,
            level_names,
        })
    }

    pub fn parameter(&self, name: &str) -> Option<&ParameterDef> {
        self.parameters.iter().find(|p| p.name == name)
    }

    /// Finds a parameter by case-insensitive name.
    pub fn lookup(&self, name: &str) -> Option<&ParameterDef> {
        let norm = normalize_words(name);
        self.parameters
            .iter()
            .find(|p| p.name.to_lowercase() == norm)
    }

    /// The word used for `level` in this space.
    pub fn level_name(&self, level: Level) -> &str {
        match &self.level_names {
            Some(names) => &names[level.ordinal()],
            None => level.label(),
        }
    }

    /// Resolves a level word: space aliases first, then the canonical labels.
    pub fn parse_level(&self, word: &str) -> Option<Level> {
        let norm = normalize_words(word);
        if let Some(names) = &self.level_names {
            if let Some(i) = names.iter().position(|n| normalize_words(n) == norm) {
                return Level::from_ordinal(i);
            }
        }
        Level::from_label(&norm).ok()
    }

    /// Whether `param` is active given the categorical choices of a solution.
    /// Conditions only reference unconditional parameters, so one lookup suffices.
    pub fn is_active<'a>(
        &self,
        param: &ParameterDef,
        choice_of: impl Fn(&str) -> Option<&'a str>,
    ) -> bool {
        match &param.active_when {
            None => true,
            Some(cond) => match choice_of(&cond.parameter) {
                Some(v) => cond.one_of.iter().any(|c| c == v),
                None => false,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub space_id: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta_features: Option<Vec<f64>>,
}

impl Task {
    pub fn new(task_id: &str, space_id: &str, description: &str) -> Result<Self> {
        let task = Task {
            task_id: task_id.to_string(),
            space_id: space_id.to_string(),
            description: description.to_string(),
            meta_features: None,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn with_meta_features(mut self, features: Vec<f64>) -> Self {
        self.meta_features = Some(features);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.task_id.trim().is_empty() {
            return Err(Error::InvalidInput("task_id is empty".into()));
        }
        if self.description.trim().is_empty() {
            return Err(Error::InvalidInput(format!(
                "task `{}` has an empty description",
                self.task_id
            )));
        }
        if let Some(mf) = &self.meta_features {
            if mf.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "task `{}` has non-finite meta-features",
                    self.task_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    Choice(String),
}

impl ParamValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            ParamValue::Number(x) => Some(*x),
            ParamValue::Choice(_) => None,
        }
    }

    pub fn as_choice(&self) -> Option<&str> {
        match self {
            ParamValue::Choice(c) => Some(c),
            ParamValue::Number(_) => None,
        }
    }
}

/// A concrete, validated assignment of the active parameters of one space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution {
    space_id: String,
    values: BTreeMap<String, ParamValue>,
}

impl Solution {
    pub fn new(space: &SolutionSpace, values: BTreeMap<String, ParamValue>) -> Result<Self> {
        for name in values.keys() {
            if space.parameter(name).is_none() {
                return Err(Error::UnknownParameter(name.clone()));
            }
        }
        let choice_of = |n: &str| values.get(n).and_then(ParamValue::as_choice);
        for p in &space.parameters {
            let active = space.is_active(p, choice_of);
            match (active, values.get(&p.name)) {
                (true, Some(v)) => p.check_value(v)?,
                (true, None) => return Err(Error::MissingParameter(p.name.clone())),
                (false, Some(_)) => {
                    return Err(Error::InvalidSolution(format!(
                        "parameter `{}` is inactive for this configuration",
                        p.name
                    )))
                }
                (false, None) => {}
            }
        }
        Ok(Solution {
            space_id: space.space_id.clone(),
            values,
        })
    }

    pub fn space_id(&self) -> &str {
        &self.space_id
    }

    pub fn values(&self) -> &BTreeMap<String, ParamValue> {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.values.get(name)
    }

    /// Stable textual key; equal solutions have equal keys.
    pub fn key(&self) -> String {
        self.values
            .iter()
            .map(|(k, v)| match v {
                ParamValue::Number(x) => format!("{k}={x:?}"),
                ParamValue::Choice(c) => format!("{k}={c}"),
            })
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Ordering of solutions used for deterministic tie-breaking: parameters in
/// space order, numbers by value, choices by declaration index, absent first.
pub fn compare_solutions(space: &SolutionSpace, a: &Solution, b: &Solution) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    for p in &space.parameters {
        let ord = match (a.get(&p.name), b.get(&p.name)) {
            (None, None) => Ordering::Equal,
            (None, Some(_)) => Ordering::Less,
            (Some(_), None) => Ordering::Greater,
            (Some(ParamValue::Number(x)), Some(ParamValue::Number(y))) => x.total_cmp(y),
            (Some(ParamValue::Choice(x)), Some(ParamValue::Choice(y))) => match &p.domain {
                Domain::Categorical { choices } => {
                    let ix = choices.iter().position(|c| c == x);
                    let iy = choices.iter().position(|c| c == y);
                    ix.cmp(&iy)
                }
                Domain::Numeric { .. } => x.cmp(y),
            },
            (Some(ParamValue::Number(_)), Some(ParamValue::Choice(_))) => Ordering::Less,
            (Some(ParamValue::Choice(_)), Some(ParamValue::Number(_))) => Ordering::Greater,
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    Ordering::Equal
}

/// A level for numeric parameters or a choice for categorical ones.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DiscreteValue {
    Level(Level),
    Choice(String),
}

pub type DiscreteSolution = BTreeMap<String, DiscreteValue>;

/// Serializes a discrete solution as parameter → canonical level label or choice.
pub fn discrete_to_strings(d: &DiscreteSolution) -> BTreeMap<String, String> {
    d.iter()
        .map(|(k, v)| {
            let s = match v {
                DiscreteValue::Level(l) => l.label().to_string(),
                DiscreteValue::Choice(c) => c.clone(),
            };
            (k.clone(), s)
        })
        .collect()
}

/// Inverse of [`discrete_to_strings`], interpreting each entry by its parameter kind.
pub fn discrete_from_strings(
    space: &SolutionSpace,
    raw: &BTreeMap<String, String>,
) -> Result<DiscreteSolution> {
    let mut out = DiscreteSolution::new();
    for (name, value) in raw {
        let p = space
            .parameter(name)
            .ok_or_else(|| Error::UnknownParameter(name.clone()))?;
        let v = if p.is_numeric() {
            DiscreteValue::Level(Level::from_label(value)?)
        } else {
            let c = p.resolve_choice(value).ok_or_else(|| {
                Error::InvalidSolution(format!("`{value}` is not a choice of `{name}`"))
            })?;
            DiscreteValue::Choice(c.to_string())
        };
        out.insert(name.clone(), v);
    }
    Ok(out)
}

/// Whether larger or smaller metric values are better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    #[default]
    HigherBetter,
    LowerBetter,
}

impl Direction {
    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::HigherBetter => a > b,
            Direction::LowerBetter => a < b,
        }
    }

    /// Orders `a` before `b` when `a` is better.
    pub fn rank(self, a: f64, b: f64) -> std::cmp::Ordering {
        match self {
            Direction::HigherBetter => b.total_cmp(&a),
            Direction::LowerBetter => a.total_cmp(&b),
        }
    }

    pub fn worst(self) -> f64 {
        match self {
            Direction::HigherBetter => f64::NEG_INFINITY,
            Direction::LowerBetter => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperienceRecord {
    pub task: Task,
    pub solution: Solution,
    pub metric: f64,
}

impl ExperienceRecord {
    pub fn new(task: Task, solution: Solution, metric: f64) -> Result<Self> {
        if task.space_id != solution.space_id() {
            return Err(Error::InvalidInput(format!(
                "task `{}` belongs to space `{}` but its solution to `{}`",
                task.task_id,
                task.space_id,
                solution.space_id()
            )));
        }
        if !metric.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite metric for task `{}`",
                task.task_id
            )));
        }
        Ok(ExperienceRecord {
            task,
            solution,
            metric,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn svm() -> SolutionSpace {
        SolutionSpace::new(
            "svm".into(),
            "An SVM.".into(),
            vec![
                ParameterDef::numeric("cost", 1e-3, 1e3, true).unwrap(),
                ParameterDef::categorical("kernel", &["linear", "polynomial", "radial"]).unwrap(),
                ParameterDef::numeric("gamma", 1e-4, 10.0, true)
                    .unwrap()
                    .when("kernel", &["radial"]),
            ],
            None,
        )
        .unwrap()
    }

    fn vals(pairs: &[(&str, ParamValue)]) -> BTreeMap<String, ParamValue> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect()
    }

    #[test]
    fn conditional_parameter_must_follow_its_parent() {
        let space = svm();
        let ok = Solution::new(
            &space,
            vals(&[
                ("cost", ParamValue::Number(1.0)),
                ("kernel", ParamValue::Choice("linear".into())),
            ]),
        );
        assert!(ok.is_ok());
        let missing_gamma = Solution::new(
            &space,
            vals(&[
                ("cost", ParamValue::Number(1.0)),
                ("kernel", ParamValue::Choice("radial".into())),
            ]),
        );
        assert!(matches!(missing_gamma, Err(Error::MissingParameter(p)) if p == "gamma"));
        let extra = Solution::new(
            &space,
            vals(&[
                ("cost", ParamValue::Number(1.0)),
                ("kernel", ParamValue::Choice("linear".into())),
                ("gamma", ParamValue::Number(0.1)),
            ]),
        );
        assert!(extra.is_err());
    }

    #[test]
    fn out_of_range_names_parameter() {
        let err = Solution::new(
            &svm(),
            vals(&[
                ("cost", ParamValue::Number(5000.0)),
                ("kernel", ParamValue::Choice("linear".into())),
            ]),
        )
        .unwrap_err();
        assert!(err.to_string().contains("cost"), "{err}");
    }

    #[test]
    fn rejects_bad_parameter_defs() {
        assert!(ParameterDef::numeric("x", 1.0, 1.0, false).is_err());
        assert!(ParameterDef::numeric("x", 0.0, 1.0, true).is_err());
        assert!(ParameterDef::categorical("k", &[]).is_err());
        assert!(ParameterDef::categorical("k", &["a", "A"]).is_err());
        assert!(ParameterDef::numeric("", 0.0, 1.0, false).is_err());
    }

    #[test]
    fn space_file_round_trips_through_json() {
        let space = svm();
        let json = serde_json::to_string(&space).unwrap();
        let back: SolutionSpace = serde_json::from_str(&json).unwrap();
        assert_eq!(space, back);
    }

    #[test]
    fn duplicate_parameter_names_rejected() {
        let r = SolutionSpace::new(
            "s".into(),
            "d".into(),
            vec![
                ParameterDef::numeric("a", 0.0, 1.0, false).unwrap(),
                ParameterDef::numeric("a", 0.0, 2.0, false).unwrap(),
            ],
            None,
        );
        assert!(r.is_err());
    }

    #[test]
    fn level_aliases_resolve_before_canonical_labels() {
        let mut space = svm();
        space.level_names =
            Some(["very small", "small", "medium", "large", "very large"].map(String::from));
        assert_eq!(space.parse_level("Small"), Some(Level::Low));
        assert_eq!(space.parse_level("very  LARGE"), Some(Level::VeryHigh));
        assert_eq!(space.parse_level("high"), Some(Level::High));
        assert_eq!(space.parse_level("enormous"), None);
        assert_eq!(space.level_name(Level::VeryLow), "very small");
    }

    #[test]
    fn record_rejects_nan_metric() {
        let space = svm();
        let task = Task::new("t", "svm", "desc").unwrap();
        let s = Solution::new(
            &space,
            vals(&[
                ("cost", ParamValue::Number(1.0)),
                ("kernel", ParamValue::Choice("linear".into())),
            ]),
        )
        .unwrap();
        assert!(ExperienceRecord::new(task, s, f64::NAN).is_err());
    }
}
