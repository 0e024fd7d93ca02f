//! Canonicalization of experience records into natural-language text.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::discretize::Discretizer;
use crate::error::{Error, Result};
use crate::space::{
    discrete_from_strings, discrete_to_strings, Direction, DiscreteSolution, DiscreteValue, Domain,
    ExperienceRecord, ParamValue, Solution, SolutionSpace,
};

/// Number of best records per task used both as demonstrations and as
/// discretizer fitting statistics.
pub const BEST_PER_TASK: usize = 3;

/// One fitted discretizer per numeric parameter of a space.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Discretizers(BTreeMap<String, Discretizer>);

impl Discretizers {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, d: Discretizer) {
        self.0.insert(d.parameter().to_string(), d);
    }

    pub fn get(&self, parameter: &str) -> Option<&Discretizer> {
        self.0.get(parameter)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Discretizer> {
        self.0.values()
    }

    /// Fits every numeric parameter of `space` on the union of the top
    /// [`BEST_PER_TASK`] records of each task present in `records`.
    pub fn fit(
        space: &SolutionSpace,
        records: &[ExperienceRecord],
        direction: Direction,
        n_levels: usize,
    ) -> Result<Self> {
        let mut task_ids: Vec<&str> = records.iter().map(|r| r.task.task_id.as_str()).collect();
        task_ids.sort_unstable();
        task_ids.dedup();
        let best: Vec<&ExperienceRecord> = task_ids
            .iter()
            .flat_map(|t| best_solutions(records, t, BEST_PER_TASK, direction))
            .collect();

        let mut out = Discretizers::new();
        for p in space.parameters.iter().filter(|p| p.is_numeric()) {
            let values: Vec<f64> = best
                .iter()
                .filter_map(|r| r.solution.get(&p.name).and_then(ParamValue::as_number))
                .collect();
            if values.is_empty() && p.active_when.is_some() {
                // conditional parameter never active among the best: fit on the range ends
                let Domain::Numeric { lo, hi, .. } = p.domain else {
                    unreachable!()
                };
                out.insert(Discretizer::fit(&[lo, hi], p, n_levels)?);
                continue;
            }
            out.insert(Discretizer::fit(&values, p, n_levels)?);
        }
        Ok(out)
    }
}

/// The `n` best records of `task_id`, stable on insertion order for equal metrics.
pub fn best_solutions<'a>(
    records: &'a [ExperienceRecord],
    task_id: &str,
    n: usize,
    direction: Direction,
) -> Vec<&'a ExperienceRecord> {
    let mut mine: Vec<&ExperienceRecord> = records
        .iter()
        .filter(|r| r.task.task_id == task_id)
        .collect();
    mine.sort_by(|a, b| direction.rank(a.metric, b.metric));
    mine.truncate(n);
    mine
}

pub fn discretize_solution(
    solution: &Solution,
    space: &SolutionSpace,
    discretizers: &Discretizers,
) -> Result<DiscreteSolution> {
    let mut out = DiscreteSolution::new();
    for (name, value) in solution.values() {
        let p = space
            .parameter(name)
            .ok_or_else(|| Error::UnknownParameter(name.clone()))?;
        let dv = match value {
            ParamValue::Number(x) => {
                let d = discretizers.get(&p.name).ok_or_else(|| {
                    Error::InvalidInput(format!("no discretizer for parameter `{}`", p.name))
                })?;
                DiscreteValue::Level(d.discretize(*x))
            }
            ParamValue::Choice(c) => DiscreteValue::Choice(c.clone()),
        };
        out.insert(name.clone(), dv);
    }
    Ok(out)
}

/// Renders a discrete solution as `"<name> is <value>."` sentences in space
/// order. Parameters absent from the solution are skipped.
pub fn verbalize_discrete(d: &DiscreteSolution, space: &SolutionSpace) -> String {
    let mut parts = Vec::with_capacity(d.len());
    for p in &space.parameters {
        let Some(v) = d.get(&p.name) else { continue };
        let word = match v {
            DiscreteValue::Level(l) => space.level_name(*l),
            DiscreteValue::Choice(c) => c.as_str(),
        };
        parts.push(format!("{} is {}.", p.name, word));
    }
    parts.join(" ")
}

pub fn verbalize_solution(
    solution: &Solution,
    space: &SolutionSpace,
    discretizers: &Discretizers,
) -> Result<String> {
    Ok(verbalize_discrete(
        &discretize_solution(solution, space, discretizers)?,
        space,
    ))
}

/// An experience record expressed in words.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalExperience {
    pub task_id: String,
    pub space_id: String,
    pub solution_text: String,
    pub discrete_solution: DiscreteSolution,
    pub metric: f64,
}

pub fn canonicalize(
    record: &ExperienceRecord,
    space: &SolutionSpace,
    discretizers: &Discretizers,
) -> Result<CanonicalExperience> {
    if record.solution.space_id() != space.space_id {
        return Err(Error::InvalidInput(format!(
            "record for task `{}` is not in space `{}`",
            record.task.task_id, space.space_id
        )));
    }
    let discrete = discretize_solution(&record.solution, space, discretizers)?;
    Ok(CanonicalExperience {
        task_id: record.task.task_id.clone(),
        space_id: space.space_id.clone(),
        solution_text: verbalize_discrete(&discrete, space),
        discrete_solution: discrete,
        metric: record.metric,
    })
}

/// On-disk form of a canonical experience (one line of `pool.jsonl`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanonicalExperienceLine {
    pub task_id: String,
    pub space_id: String,
    pub solution_text: String,
    pub discrete_solution: BTreeMap<String, String>,
    pub metric: f64,
}

impl From<&CanonicalExperience> for CanonicalExperienceLine {
    fn from(e: &CanonicalExperience) -> Self {
        CanonicalExperienceLine {
            task_id: e.task_id.clone(),
            space_id: e.space_id.clone(),
            solution_text: e.solution_text.clone(),
            discrete_solution: discrete_to_strings(&e.discrete_solution),
            metric: e.metric,
        }
    }
}

impl CanonicalExperienceLine {
    /// Rebuilds the experience, checking that the stored text still matches
    /// what the space would verbalize.
    pub fn resolve(self, space: &SolutionSpace) -> Result<CanonicalExperience> {
        if self.space_id != space.space_id {
            return Err(Error::InvalidInput(format!(
                "experience for task `{}` belongs to space `{}`",
                self.task_id, self.space_id
            )));
        }
        let discrete = discrete_from_strings(space, &self.discrete_solution)?;
        let text = verbalize_discrete(&discrete, space);
        if text != self.solution_text {
            return Err(Error::InvalidInput(format!(
                "solution_text of task `{}` does not match its discrete solution",
                self.task_id
            )));
        }
        Ok(CanonicalExperience {
            task_id: self.task_id,
            space_id: self.space_id,
            solution_text: text,
            discrete_solution: discrete,
            metric: self.metric,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{Level, ParameterDef, Task};

    fn space() -> SolutionSpace {
        SolutionSpace::new(
            "svm".into(),
            "svm".into(),
            vec![
                ParameterDef::numeric("cost", 1e-3, 1e3, true).unwrap(),
                ParameterDef::categorical("kernel", &["linear", "radial"]).unwrap(),
            ],
            Some(["very small", "small", "medium", "large", "very large"].map(String::from)),
        )
        .unwrap()
    }

    fn record(task: &str, cost: f64, kernel: &str, metric: f64) -> ExperienceRecord {
        let sp = space();
        let mut v = BTreeMap::new();
        v.insert("cost".to_string(), ParamValue::Number(cost));
        v.insert("kernel".to_string(), ParamValue::Choice(kernel.into()));
        ExperienceRecord::new(
            Task::new(task, "svm", "d").unwrap(),
            Solution::new(&sp, v).unwrap(),
            metric,
        )
        .unwrap()
    }

    #[test]
    fn verbalizes_with_space_lexicon() {
        let sp = space();
        let mut d = DiscreteSolution::new();
        d.insert("cost".into(), DiscreteValue::Level(Level::VeryLow));
        d.insert("kernel".into(), DiscreteValue::Choice("linear".into()));
        assert_eq!(
            verbalize_discrete(&d, &sp),
            "cost is very small. kernel is linear."
        );
    }

    #[test]
    fn single_categorical_sentence() {
        let sp = SolutionSpace::new(
            "k".into(),
            "k".into(),
            vec![ParameterDef::categorical("kernel", &["radial"]).unwrap()],
            None,
        )
        .unwrap();
        let mut d = DiscreteSolution::new();
        d.insert("kernel".into(), DiscreteValue::Choice("radial".into()));
        assert_eq!(verbalize_discrete(&d, &sp), "kernel is radial.");
    }

    #[test]
    fn best_solutions_order_and_ties() {
        let recs: Vec<_> = [0.7, 0.9, 0.9, 0.5]
            .iter()
            .enumerate()
            .map(|(i, m)| record("a", 1.0 + i as f64, "linear", *m))
            .collect();
        let best = best_solutions(&recs, "a", 3, Direction::HigherBetter);
        let costs: Vec<f64> = best
            .iter()
            .map(|r| r.solution.get("cost").unwrap().as_number().unwrap())
            .collect();
        assert_eq!(costs, vec![2.0, 3.0, 1.0]);
        assert_eq!(
            best_solutions(&recs, "a", 10, Direction::HigherBetter).len(),
            4
        );
        assert!(best_solutions(&recs, "zzz", 3, Direction::HigherBetter).is_empty());

        let low: Vec<_> = [3.0, 1.0, 2.0]
            .iter()
            .map(|m| record("b", 1.0, "linear", *m))
            .collect();
        let best = best_solutions(&low, "b", 1, Direction::LowerBetter);
        assert_eq!(best[0].metric, 1.0);
    }

    #[test]
    fn canonicalize_and_line_round_trip() {
        let sp = space();
        let recs = vec![
            record("a", 0.01, "linear", 0.9),
            record("a", 1.0, "radial", 0.8),
            record("b", 100.0, "radial", 0.7),
        ];
        let ds = Discretizers::fit(&sp, &recs, Direction::HigherBetter, 5).unwrap();
        let c = canonicalize(&recs[0], &sp, &ds).unwrap();
        assert_eq!(c.metric, 0.9);
        assert_eq!(
            c.solution_text,
            verbalize_discrete(&c.discrete_solution, &sp)
        );
        let line = CanonicalExperienceLine::from(&c);
        let json = serde_json::to_string(&line).unwrap();
        let back: CanonicalExperienceLine = serde_json::from_str(&json).unwrap();
        assert_eq!(back.resolve(&sp).unwrap(), c);
    }
}
