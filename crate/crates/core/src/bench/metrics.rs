use crate::error::{Error, Result};
use crate::space::Direction;

/// Best of the first `t` metrics under `direction`.
pub fn metric_at_t(metrics: &[f64], t: usize, direction: Direction) -> Result<f64> {
    if t == 0 || t > metrics.len() {
        return Err(Error::InvalidInput(format!(
            "t = {t} outside 1..={}",
            metrics.len()
        )));
    }
    Ok(metrics[..t]
        .iter()
        .copied()
        .fold(direction.worst(), |best, m| {
            if direction.better(m, best) {
                m
            } else {
                best
            }
        }))
}

/// Min-max normalization to `[0, 100]`, where 100 is the best bound.
pub fn normalize_accuracy(raw: f64, (y_min, y_max): (f64, f64), direction: Direction) -> f64 {
    match direction {
        Direction::HigherBetter => 100.0 * (raw - y_min) / (y_max - y_min),
        Direction::LowerBetter => 100.0 * (y_max - raw) / (y_max - y_min),
    }
}
