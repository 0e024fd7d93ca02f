//! Reference methods: random search, a constant portfolio and nearest task by
//! meta-features.

use std::collections::HashSet;

use rand::seq::index::sample;

use super::Benchmark;
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::space::{Solution, Task};

/// `n` distinct table solutions of `task_id` drawn uniformly without
/// replacement. Asking for more than the table holds returns all of it.
pub fn baseline_random(b: &Benchmark, task_id: &str, n: usize, seed: u64) -> Vec<Solution> {
    let rows = b.rows(task_id);
    let mut rng = substream(seed, &format!("random/{task_id}"));
    sample(&mut rng, rows.len(), n.min(rows.len()))
        .into_iter()
        .map(|i| rows[i].solution.clone())
        .collect()
}

/// Greedy portfolio over the grid: first the best solution on mean
/// normalized metric over `train`, then each pick maximizing the mean over
/// tasks of the portfolio's best normalized metric. Ties go to the earlier
/// grid solution.
pub fn baseline_constant(b: &Benchmark, train: &[&str], n: usize) -> Result<Vec<Solution>> {
    if train.is_empty() {
        return Err(Error::InvalidInput(
            "constant baseline needs training tasks".into(),
        ));
    }
    let grid = b.grid();
    let mut scores = Vec::with_capacity(grid.len());
    for s in &grid {
        let mut row = Vec::with_capacity(train.len());
        for t in train {
            // a solution whose categoricals never occur on a task scores worst there
            let nacc = match b.evaluate_solution(t, s) {
                Ok(m) => b.normalize(m, t)?,
                Err(Error::OffGridCategorical { .. }) => 0.0,
                Err(e) => return Err(e),
            };
            row.push(nacc);
        }
        scores.push(row);
    }

    let mut best_so_far = vec![f64::NEG_INFINITY; train.len()];
    let mut picked: Vec<usize> = Vec::new();
    while picked.len() < n.min(grid.len()) {
        let mut choice: Option<(usize, f64)> = None;
        for (i, row) in scores.iter().enumerate() {
            if picked.contains(&i) {
                continue;
            }
            let total: f64 = row.iter().zip(&best_so_far).map(|(s, b)| s.max(*b)).sum();
            let mean = total / train.len() as f64;
            if choice.is_none_or(|(_, m)| mean > m) {
                choice = Some((i, mean));
            }
        }
        let (i, _) = choice.expect("grid has unpicked solutions");
        for (b, s) in best_so_far.iter_mut().zip(&scores[i]) {
            *b = b.max(*s);
        }
        picked.push(i);
    }
    Ok(picked.into_iter().map(|i| grid[i].clone()).collect())
}

fn meta(t: &Task) -> Result<&[f64]> {
    t.meta_features
        .as_deref()
        .ok_or_else(|| Error::InvalidInput(format!("task `{}` has no meta-features", t.task_id)))
}

/// Training tasks ordered by L2 distance to `query` over meta-features
/// z-scored with the training statistics; ties by task id.
pub fn nearest_tasks<'a>(train: &[&'a Task], query: &Task) -> Result<Vec<(&'a Task, f64)>> {
    let q = meta(query)?;
    let feats = train.iter().map(|t| meta(t)).collect::<Result<Vec<_>>>()?;
    if let Some(f) = feats.iter().find(|f| f.len() != q.len()) {
        return Err(Error::InvalidInput(format!(
            "meta-feature length {} differs from the query's {}",
            f.len(),
            q.len()
        )));
    }
    let n = feats.len().max(1) as f64;
    let dim = q.len();
    let mut mean = vec![0.0; dim];
    let mut scale = vec![1.0; dim];
    for j in 0..dim {
        mean[j] = feats.iter().map(|f| f[j]).sum::<f64>() / n;
        let var = feats.iter().map(|f| (f[j] - mean[j]).powi(2)).sum::<f64>() / n;
        if var > 0.0 {
            scale[j] = var.sqrt();
        }
    }
    let mut out: Vec<(&Task, f64)> = train
        .iter()
        .zip(&feats)
        .map(|(t, f)| {
            let d2: f64 = (0..dim).map(|j| ((f[j] - q[j]) / scale[j]).powi(2)).sum();
            (*t, d2.sqrt())
        })
        .collect();
    out.sort_by(|a, b| {
        a.1.total_cmp(&b.1)
            .then_with(|| a.0.task_id.cmp(&b.0.task_id))
    });
    Ok(out)
}

/// The best `n` table solutions of the nearest training task, continuing
/// with the next nearest tasks when it has fewer than `n`.
pub fn baseline_nearest_task(
    b: &Benchmark,
    train: &[&Task],
    query: &Task,
    n: usize,
) -> Result<Vec<Solution>> {
    let mut out: Vec<Solution> = Vec::with_capacity(n);
    let mut seen = HashSet::new();
    for (t, _) in nearest_tasks(train, query)? {
        let mut rows: Vec<_> = b.rows(&t.task_id).iter().collect();
        rows.sort_by(|x, y| b.direction.rank(x.metric, y.metric));
        for r in rows {
            if out.len() >= n {
                return Ok(out);
            }
            if seen.insert(r.solution.key()) {
                out.push(r.solution.clone());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{Direction, ParamValue, ParameterDef, SolutionSpace};
    use std::collections::BTreeMap;

    fn fixture(metrics: &[[f64; 4]]) -> Benchmark {
        let space = SolutionSpace::new(
            "s".into(),
            "A space.".into(),
            vec![ParameterDef::numeric("x", 0.0, 10.0, false).unwrap()],
            None,
        )
        .unwrap();
        let sol = |x: f64| {
            Solution::new(
                &space,
                BTreeMap::from([("x".to_string(), ParamValue::Number(x))]),
            )
            .unwrap()
        };
        let mut tasks = Vec::new();
        let mut table = Vec::new();
        for (i, ms) in metrics.iter().enumerate() {
            let id = format!("t{i}");
            tasks.push(
                Task::new(&id, "s", &format!("Task {i}."))
                    .unwrap()
                    .with_meta_features(vec![i as f64, (i * i) as f64]),
            );
            for (j, m) in ms.iter().enumerate() {
                table.push((id.clone(), sol(j as f64), *m));
            }
        }
        Benchmark::new(
            "b",
            space,
            tasks,
            Direction::HigherBetter,
            table,
            None,
            BTreeMap::new(),
        )
        .unwrap()
    }

    #[test]
    fn constant_n1_is_exhaustive_argmax() {
        let b = fixture(&[
            [0.1, 0.9, 0.5, 0.2],
            [0.8, 0.2, 0.6, 0.1],
            [0.3, 0.4, 0.7, 0.0],
        ]);
        let train = ["t0", "t1", "t2"];
        let got = baseline_constant(&b, &train, 1).unwrap();
        // oracle: mean nAcc of each grid point
        let mut best = (0usize, f64::NEG_INFINITY);
        for j in 0..4 {
            let s = &b.grid()[j];
            let mean: f64 = train
                .iter()
                .map(|t| b.normalize(b.evaluate_solution(t, s).unwrap(), t).unwrap())
                .sum::<f64>()
                / 3.0;
            if mean > best.1 {
                best = (j, mean);
            }
        }
        assert_eq!(got, vec![b.grid()[best.0].clone()]);
        assert_eq!(baseline_constant(&b, &train, 9).unwrap().len(), 4);
    }

    #[test]
    fn constant_ties_take_first_grid_point() {
        let b = fixture(&[[1.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 1.0]]);
        let got = baseline_constant(&b, &["t0", "t1"], 1).unwrap();
        assert_eq!(got[0], b.grid()[0]);
    }

    #[test]
    fn random_is_seeded_permutation() {
        let b = fixture(&[[0.1, 0.9, 0.5, 0.2]]);
        let a = baseline_random(&b, "t0", 4, 3);
        assert_eq!(a, baseline_random(&b, "t0", 4, 3));
        let mut keys: Vec<String> = a.iter().map(Solution::key).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 4);
        assert_eq!(baseline_random(&b, "t0", 10, 3).len(), 4);
    }

    #[test]
    fn nearest_task_picks_closer_and_falls_through() {
        let b = fixture(&[
            [0.1, 0.9, 0.5, 0.2],
            [0.8, 0.2, 0.6, 0.1],
            [0.3, 0.4, 0.7, 0.0],
        ]);
        let train: Vec<&Task> = vec![&b.tasks[0], &b.tasks[2]];
        let query = b.tasks[1].clone();
        // z-scored: t0 at (-1,-1), t2 at (1,1), query at (0,-0.5); t0 is nearer
        let got = baseline_nearest_task(&b, &train, &query, 2).unwrap();
        assert_eq!(got[0].get("x"), Some(&ParamValue::Number(1.0)));
        assert_eq!(got[1].get("x"), Some(&ParamValue::Number(2.0)));
        let all = baseline_nearest_task(&b, &train, &query, 6).unwrap();
        assert_eq!(all.len(), 4);
        let mut bare = query;
        bare.meta_features = None;
        assert!(baseline_nearest_task(&b, &train, &bare, 1).is_err());
    }
}
