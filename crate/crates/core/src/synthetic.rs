//! A small lookup-table benchmark with a task-dependent optimum.
//!
//! Twelve tasks in four families of three share a gradient-boosting style
//! space of 60 grid points. Each family has its own best learning rate and
//! depth; the booster only nudges the metric, so the three best grid points
//! of every task differ in booster alone.

use std::collections::BTreeMap;

use crate::bench::Benchmark;
use crate::error::Result;
use crate::space::{Direction, ParamValue, ParameterDef, Solution, SolutionSpace, Task};

pub const SPACE_ID: &str = "synthetic-gbm";
pub const LEARNING_RATES: [f64; 5] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];
pub const DEPTHS: [f64; 4] = [2.0, 4.0, 6.0, 8.0];
pub const BOOSTERS: [&str; 3] = ["gbtree", "dart", "linear"];

struct Family {
    key: &'static str,
    best_lr: f64,
    best_depth: f64,
    blurb: &'static str,
    meta: [f64; 3],
}

const FAMILIES: [Family; 4] = [
    Family {
        key: "sensor",
        best_lr: 1e-2,
        best_depth: 4.0,
        blurb: "It holds vibration sensor readings from rotating machinery, sampled per second, with a binary fault label.",
        meta: [4.0, 12.0, 0.10],
    },
    Family {
        key: "retail",
        best_lr: 1e-2,
        best_depth: 8.0,
        blurb: "It holds retail basket transactions with customer loyalty attributes and a binary churn label.",
        meta: [5.0, 40.0, 0.30],
    },
    Family {
        key: "clinic",
        best_lr: 1e-1,
        best_depth: 4.0,
        blurb: "It holds clinical patient records with laboratory measurements and a binary diagnosis label.",
        meta: [3.0, 25.0, 0.45],
    },
    Family {
        key: "text",
        best_lr: 1e-1,
        best_depth: 8.0,
        blurb: "It holds short review documents encoded as sparse word counts with a binary sentiment label.",
        meta: [4.5, 90.0, 0.20],
    },
];

pub fn space() -> SolutionSpace {
    SolutionSpace::new(
        SPACE_ID.to_string(),
        "Here are some classification datasets along with best hyper-parameter configurations to train a gradient boosting model on them.".to_string(),
        vec![
            ParameterDef::numeric("learning_rate", 1e-4, 1.0, true).expect("valid"),
            ParameterDef::numeric("max_depth", 1.0, 10.0, false).expect("valid"),
            ParameterDef::categorical("booster", &BOOSTERS).expect("valid"),
        ],
        None,
    )
    .expect("valid space")
}

fn solution(space: &SolutionSpace, lr: f64, depth: f64, booster: &str) -> Solution {
    Solution::new(
        space,
        BTreeMap::from([
            ("learning_rate".to_string(), ParamValue::Number(lr)),
            ("max_depth".to_string(), ParamValue::Number(depth)),
            (
                "booster".to_string(),
                ParamValue::Choice(booster.to_string()),
            ),
        ]),
    )
    .expect("grid point inside the space")
}

/// Metric of a grid point on task `index` of family `f`.
fn metric(f: &Family, index: usize, lr: f64, depth: f64, booster: usize) -> f64 {
    let dl = lr.log10() - f.best_lr.log10();
    let dd = (depth - f.best_depth) / 2.0;
    let base = 0.80 + 0.01 * index as f64;
    let boost = 0.002 * ((index + booster) % 3) as f64;
    base - 0.6 * (1.0 - (-0.35 * dl * dl - 0.12 * dd * dd).exp()) + boost
}

pub fn tasks() -> Vec<Task> {
    let mut out = Vec::new();
    for (fi, f) in FAMILIES.iter().enumerate() {
        for j in 0..3 {
            let index = fi * 3 + j;
            let id = format!("{}-{}", f.key, j + 1);
            let instances = 1000 + 750 * index;
            let desc = format!(
                "The dataset name is \"{id}\". It contains 2 classes and {instances} instances. {}",
                f.blurb
            );
            let meta = vec![
                f.meta[0] + 0.1 * j as f64,
                f.meta[1] + j as f64,
                f.meta[2] + 0.01 * j as f64,
            ];
            out.push(
                Task::new(&id, SPACE_ID, &desc)
                    .expect("valid task")
                    .with_meta_features(meta),
            );
        }
    }
    out
}

/// The twelve-task benchmark.
pub fn benchmark() -> Result<Benchmark> {
    let space = space();
    let tasks = tasks();
    let mut table = Vec::new();
    for (fi, f) in FAMILIES.iter().enumerate() {
        for j in 0..3 {
            let index = fi * 3 + j;
            let id = &tasks[index].task_id;
            for lr in LEARNING_RATES {
                for depth in DEPTHS {
                    for (bi, b) in BOOSTERS.iter().enumerate() {
                        table.push((
                            id.clone(),
                            solution(&space, lr, depth, b),
                            metric(f, index, lr, depth, bi),
                        ));
                    }
                }
            }
        }
    }
    Benchmark::new(
        "synthetic-12",
        space,
        tasks,
        Direction::HigherBetter,
        table,
        None,
        BTreeMap::new(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape() {
        let b = benchmark().unwrap();
        assert_eq!(b.tasks.len(), 12);
        for t in &b.tasks {
            assert_eq!(b.rows(&t.task_id).len(), 60);
        }
    }

    #[test]
    fn top_three_differ_only_in_booster() {
        let b = benchmark().unwrap();
        for t in &b.tasks {
            let mut rows: Vec<_> = b.rows(&t.task_id).iter().collect();
            rows.sort_by(|x, y| b.direction.rank(x.metric, y.metric));
            let lr = rows[0].solution.get("learning_rate");
            let d = rows[0].solution.get("max_depth");
            for r in &rows[1..3] {
                assert_eq!(r.solution.get("learning_rate"), lr);
                assert_eq!(r.solution.get("max_depth"), d);
            }
            assert!(rows[2].metric > rows[3].metric + 0.05);
        }
    }
}
