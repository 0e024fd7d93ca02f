//! Lookup-table benchmarks and the evaluation protocol around them.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::space::{
    compare_solutions, Direction, Domain, ExperienceRecord, ParamValue, Solution, SolutionSpace,
    Task,
};

pub mod baselines;
pub mod loo;
pub mod metrics;

pub use baselines::{baseline_constant, baseline_nearest_task, baseline_random};
pub use loo::{run_loo_eval, EvalConfig, EvalReport, Method, TaskResult};
pub use metrics::{metric_at_t, normalize_accuracy};

/// One evaluated configuration of a task.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub solution: Solution,
    pub metric: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableLine {
    pub task_id: String,
    pub values: BTreeMap<String, ParamValue>,
    pub metric: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkMeta {
    pub name: String,
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_bounds: Option<BTreeMap<String, (f64, f64)>>,
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub name: String,
    pub space: SolutionSpace,
    pub tasks: Vec<Task>,
    pub direction: Direction,
    rows: BTreeMap<String, Vec<TableRow>>,
    index: HashMap<(String, String), usize>,
    norm_bounds: BTreeMap<String, (f64, f64)>,
    twins: BTreeMap<String, Vec<String>>,
}

impl Benchmark {
    /// Validates and indexes a benchmark. Bounds missing from `norm_bounds`
    /// are the per-task min and max of the table.
    pub fn new(
        name: &str,
        space: SolutionSpace,
        tasks: Vec<Task>,
        direction: Direction,
        table: Vec<(String, Solution, f64)>,
        norm_bounds: Option<BTreeMap<String, (f64, f64)>>,
        twins: BTreeMap<String, Vec<String>>,
    ) -> Result<Self> {
        let mut ids = HashSet::new();
        for t in &tasks {
            t.validate()?;
            if t.space_id != space.space_id {
                return Err(Error::InvalidInput(format!(
                    "task `{}` is in space `{}`, benchmark space is `{}`",
                    t.task_id, t.space_id, space.space_id
                )));
            }
            if !ids.insert(t.task_id.clone()) {
                return Err(Error::InvalidInput(format!(
                    "duplicate task `{}`",
                    t.task_id
                )));
            }
        }
        let dims: HashSet<usize> = tasks
            .iter()
            .filter_map(|t| t.meta_features.as_ref().map(Vec::len))
            .collect();
        if dims.len() > 1 {
            return Err(Error::InvalidInput(format!(
                "meta-feature dimensions differ across tasks: {dims:?}"
            )));
        }

        let mut rows: BTreeMap<String, Vec<TableRow>> = BTreeMap::new();
        let mut index = HashMap::new();
        for (task_id, solution, metric) in table {
            if !ids.contains(&task_id) {
                return Err(Error::InvalidInput(format!(
                    "table row for unknown task `{task_id}`"
                )));
            }
            if !metric.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "non-finite metric for task `{task_id}` at {}",
                    solution.key()
                )));
            }
            if solution.space_id() != space.space_id {
                return Err(Error::InvalidInput(format!(
                    "table solution for `{task_id}` is not in space `{}`",
                    space.space_id
                )));
            }
            let list = rows.entry(task_id.clone()).or_default();
            let key = solution.key();
            if index
                .insert((task_id.clone(), key.clone()), list.len())
                .is_some()
            {
                return Err(Error::InvalidInput(format!(
                    "duplicate table entry for task `{task_id}` at {key}"
                )));
            }
            list.push(TableRow { solution, metric });
        }

        let given = norm_bounds.unwrap_or_default();
        let mut bounds = BTreeMap::new();
        for t in &tasks {
            let id = &t.task_id;
            let b = match given.get(id) {
                Some(b) => *b,
                None => {
                    let list = rows.get(id).map(Vec::as_slice).unwrap_or(&[]);
                    let lo = list.iter().map(|r| r.metric).fold(f64::INFINITY, f64::min);
                    let hi = list
                        .iter()
                        .map(|r| r.metric)
                        .fold(f64::NEG_INFINITY, f64::max);
                    (lo, hi)
                }
            };
            if !(b.0.is_finite() && b.1.is_finite() && b.0 < b.1) {
                return Err(Error::InvalidInput(format!(
                    "task `{id}` has degenerate normalization bounds {b:?}"
                )));
            }
            bounds.insert(id.clone(), b);
        }

        for (k, vs) in &twins {
            for id in std::iter::once(k).chain(vs) {
                if !ids.contains(id) {
                    return Err(Error::InvalidInput(format!(
                        "twin map names unknown task `{id}`"
                    )));
                }
            }
        }

        Ok(Benchmark {
            name: name.to_string(),
            space,
            tasks,
            direction,
            rows,
            index,
            norm_bounds: bounds,
            twins,
        })
    }

    /// Loads a bundle directory: `space.json`, `tasks.jsonl`, `table.jsonl`,
    /// `meta.json` and optionally `twins.json`.
    pub fn load(dir: &Path) -> Result<Self> {
        let space: SolutionSpace = io::read_json(&dir.join("space.json"))?;
        let tasks_path = dir.join("tasks.jsonl");
        let tasks: Vec<Task> = io::read_jsonl(&tasks_path)?;
        for (i, t) in tasks.iter().enumerate() {
            t.validate()
                .map_err(|e| Error::schema(&tasks_path, i + 1, e.to_string()))?;
        }
        let meta: BenchmarkMeta = io::read_json(&dir.join("meta.json"))?;
        let twins_path = dir.join("twins.json");
        let twins = if twins_path.exists() {
            io::read_json(&twins_path)?
        } else {
            BTreeMap::new()
        };

        let table_path = dir.join("table.jsonl");
        let text = std::fs::read_to_string(&table_path).map_err(|e| Error::io(&table_path, e))?;
        let mut table = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: TableLine = serde_json::from_str(line)
                .map_err(|e| Error::schema(&table_path, i + 1, e.to_string()))?;
            if !row.metric.is_finite() {
                return Err(Error::schema(&table_path, i + 1, "non-finite metric"));
            }
            let solution = Solution::new(&space, row.values)
                .map_err(|e| Error::schema(&table_path, i + 1, e.to_string()))?;
            table.push((row.task_id, solution, row.metric));
        }
        Benchmark::new(
            &meta.name,
            space,
            tasks,
            meta.direction,
            table,
            meta.norm_bounds,
            twins,
        )
    }

    /// Writes the bundle so that [`Benchmark::load`] reproduces it.
    pub fn write(&self, dir: &Path) -> Result<()> {
        io::write_json(&dir.join("space.json"), &self.space)?;
        io::write_jsonl(&dir.join("tasks.jsonl"), &self.tasks)?;
        let lines = self.tasks.iter().flat_map(|t| {
            self.rows(&t.task_id).iter().map(|r| TableLine {
                task_id: t.task_id.clone(),
                values: r.solution.values().clone(),
                metric: r.metric,
            })
        });
        io::write_jsonl(&dir.join("table.jsonl"), lines)?;
        let meta = BenchmarkMeta {
            name: self.name.clone(),
            direction: self.direction,
            norm_bounds: None,
        };
        io::write_json(&dir.join("meta.json"), &meta)?;
        if !self.twins.is_empty() {
            io::write_json(&dir.join("twins.json"), &self.twins)?;
        }
        Ok(())
    }

    pub fn task(&self, task_id: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    /// Table rows of a task in file order.
    pub fn rows(&self, task_id: &str) -> &[TableRow] {
        self.rows.get(task_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn norm_bounds(&self, task_id: &str) -> Option<(f64, f64)> {
        self.norm_bounds.get(task_id).copied()
    }

    /// Tasks that must be held out together with `task_id`, itself included.
    pub fn held_out_with(&self, task_id: &str) -> HashSet<String> {
        let mut out = HashSet::from([task_id.to_string()]);
        if let Some(ts) = self.twins.get(task_id) {
            out.extend(ts.iter().cloned());
        }
        for (k, ts) in &self.twins {
            if ts.iter().any(|t| t == task_id) {
                out.insert(k.clone());
            }
        }
        out
    }

    /// The table as experience records, for the given tasks in task order.
    pub fn records(&self, task_ids: &HashSet<String>) -> Vec<ExperienceRecord> {
        self.tasks
            .iter()
            .filter(|t| task_ids.contains(&t.task_id))
            .flat_map(|t| {
                self.rows(&t.task_id).iter().map(move |r| ExperienceRecord {
                    task: t.clone(),
                    solution: r.solution.clone(),
                    metric: r.metric,
                })
            })
            .collect()
    }

    /// Every distinct solution appearing in the table, in solution order.
    pub fn grid(&self) -> Vec<Solution> {
        let mut seen = HashSet::new();
        let mut out: Vec<Solution> = self
            .rows
            .values()
            .flatten()
            .filter(|r| seen.insert(r.solution.key()))
            .map(|r| r.solution.clone())
            .collect();
        out.sort_by(|a, b| compare_solutions(&self.space, a, b));
        out
    }

    pub fn normalize(&self, raw: f64, task_id: &str) -> Result<f64> {
        let bounds = self
            .norm_bounds(task_id)
            .ok_or_else(|| Error::InvalidInput(format!("unknown task `{task_id}`")))?;
        Ok(normalize_accuracy(raw, bounds, self.direction))
    }

    /// Metric of `s` on `task_id`: an exact table hit, or else the nearest
    /// grid entry with the same categorical values.
    pub fn evaluate_solution(&self, task_id: &str, s: &Solution) -> Result<f64> {
        if self.task(task_id).is_none() {
            return Err(Error::InvalidInput(format!("unknown task `{task_id}`")));
        }
        if let Some(&i) = self.index.get(&(task_id.to_string(), s.key())) {
            return Ok(self.rows[task_id][i].metric);
        }
        let mut best: Option<(f64, &TableRow)> = None;
        for row in self.rows(task_id) {
            let Some(d) = self.distance(s, &row.solution) else {
                continue;
            };
            best = match best {
                None => Some((d, row)),
                Some((bd, brow)) => {
                    let tol = 1e-12 * bd.abs().max(d.abs()).max(1.0);
                    let tie_won = (d - bd).abs() <= tol
                        && compare_solutions(&self.space, &row.solution, &brow.solution).is_lt();
                    if d < bd - tol || tie_won {
                        Some((d, row))
                    } else {
                        Some((bd, brow))
                    }
                }
            };
        }
        best.map(|(_, r)| r.metric)
            .ok_or_else(|| Error::OffGridCategorical {
                task_id: task_id.to_string(),
                detail: s.key(),
            })
    }

    /// Squared distance over normalized numeric values, or `None` when the
    /// categorical values or the set of active parameters differ.
    fn distance(&self, a: &Solution, b: &Solution) -> Option<f64> {
        let mut d = 0.0;
        for p in &self.space.parameters {
            match (a.get(&p.name), b.get(&p.name), &p.domain) {
                (None, None, _) => {}
                (
                    Some(ParamValue::Number(x)),
                    Some(ParamValue::Number(y)),
                    Domain::Numeric { lo, hi, log_scale },
                ) => {
                    let (x, y, lo, hi) = if *log_scale {
                        (x.log10(), y.log10(), lo.log10(), hi.log10())
                    } else {
                        (*x, *y, *lo, *hi)
                    };
                    let z = (x - y) / (hi - lo);
                    d += z * z;
                }
                (Some(ParamValue::Choice(x)), Some(ParamValue::Choice(y)), _) if x == y => {}
                _ => return None,
            }
        }
        Some(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::ParameterDef;

    fn bench() -> Benchmark {
        let space = SolutionSpace::new(
            "s".into(),
            "A space.".into(),
            vec![
                ParameterDef::numeric("x", 0.0, 10.0, false).unwrap(),
                ParameterDef::categorical("k", &["a", "b"]).unwrap(),
            ],
            None,
        )
        .unwrap();
        let sol = |x: f64, k: &str| {
            Solution::new(
                &space,
                BTreeMap::from([
                    ("x".to_string(), ParamValue::Number(x)),
                    ("k".to_string(), ParamValue::Choice(k.to_string())),
                ]),
            )
            .unwrap()
        };
        let table = vec![
            ("t".to_string(), sol(2.0, "a"), 0.2),
            ("t".to_string(), sol(4.0, "a"), 0.4),
        ];
        Benchmark::new(
            "b",
            space.clone(),
            vec![Task::new("t", "s", "Task t.").unwrap()],
            Direction::HigherBetter,
            table,
            None,
            BTreeMap::new(),
        )
        .unwrap()
    }

    fn at(b: &Benchmark, x: f64, k: &str) -> Solution {
        Solution::new(
            &b.space,
            BTreeMap::from([
                ("x".to_string(), ParamValue::Number(x)),
                ("k".to_string(), ParamValue::Choice(k.to_string())),
            ]),
        )
        .unwrap()
    }

    #[test]
    fn exact_and_snapped_lookup() {
        let b = bench();
        assert_eq!(b.evaluate_solution("t", &at(&b, 4.0, "a")).unwrap(), 0.4);
        assert_eq!(b.evaluate_solution("t", &at(&b, 3.9, "a")).unwrap(), 0.4);
        // equidistant: the smaller grid neighbor wins
        assert_eq!(b.evaluate_solution("t", &at(&b, 3.0, "a")).unwrap(), 0.2);
        assert!(matches!(
            b.evaluate_solution("t", &at(&b, 3.0, "b")),
            Err(Error::OffGridCategorical { .. })
        ));
    }

    #[test]
    fn bounds_from_table() {
        let b = bench();
        assert_eq!(b.norm_bounds("t"), Some((0.2, 0.4)));
        assert!((b.normalize(0.3, "t").unwrap() - 50.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_and_nan_rejected() {
        let b = bench();
        let one = vec![("t".to_string(), at(&b, 2.0, "a"), 0.2)];
        let err = Benchmark::new(
            "b",
            b.space.clone(),
            b.tasks.clone(),
            Direction::HigherBetter,
            one,
            None,
            BTreeMap::new(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("degenerate"));
        let nan = vec![("t".to_string(), at(&b, 2.0, "a"), f64::NAN)];
        assert!(Benchmark::new(
            "b",
            b.space.clone(),
            b.tasks.clone(),
            Direction::HigherBetter,
            nan,
            None,
            BTreeMap::new()
        )
        .is_err());
    }

    #[test]
    fn write_then_load() {
        let b = bench();
        let dir = tempfile::tempdir().unwrap();
        b.write(dir.path()).unwrap();
        let c = Benchmark::load(dir.path()).unwrap();
        assert_eq!(c.rows("t"), b.rows("t"));
        assert_eq!(c.norm_bounds("t"), b.norm_bounds("t"));
    }

    #[test]
    fn load_reports_line_of_bad_row() {
        let b = bench();
        let dir = tempfile::tempdir().unwrap();
        b.write(dir.path()).unwrap();
        let p = dir.path().join("table.jsonl");
        let mut text = std::fs::read_to_string(&p).unwrap();
        text.push_str("{\"task_id\":\"t\",\"values\":{\"x\":11.0,\"k\":\"a\"},\"metric\":0.1}\n");
        std::fs::write(&p, text).unwrap();
        let err = Benchmark::load(dir.path()).unwrap_err().to_string();
        assert!(err.contains(":3:") && err.contains("`x`"), "{err}");
    }
}
