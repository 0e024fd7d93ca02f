//! Quantile discretization of numeric parameters into ordinal levels.
//!
//! Split points are the `1/n, …, (n-1)/n` quantiles of the fitting values
//! (linear interpolation between order statistics, in log10 space for
//! log-scale parameters). Bins are half-open `[s_i, s_{i+1})`, the first bin is
//! unbounded below and the last unbounded above. When duplicate split points
//! collapse bins, the surviving bins take the centered run of the five labels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{Domain, Level, ParameterDef, DEFAULT_LEVEL_NAMES};

#[derive(Debug, Clone, PartialEq)]
pub struct Discretizer {
    parameter: String,
    split_points: Vec<f64>,
    bin_levels: Vec<Level>,
    representatives: Vec<f64>,
    fitted_in_log: bool,
}

/// Linear-interpolation quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    interpolate(sorted, lo, h - lo as f64)
}

fn interpolate(sorted: &[f64], lo: usize, frac: f64) -> f64 {
    let hi = (lo + 1).min(sorted.len() - 1);
    if frac == 0.0 || sorted[lo] == sorted[hi] {
        return sorted[lo];
    }
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Lower order statistic and interpolation fraction of the `i/n` quantile
/// among `len` values, from integer arithmetic so exact positions stay exact.
fn position(len: usize, i: usize, n: usize) -> (usize, f64) {
    let num = (len - 1) * i;
    (num / n, (num % n) as f64 / n as f64)
}

/// Labels for `n_bins` consecutive bins: the centered run of the five levels.
pub fn centered_levels(n_bins: usize) -> Vec<Level> {
    let n = n_bins.clamp(1, 5);
    let start = (5 - n) / 2;
    Level::ALL[start..start + n].to_vec()
}

impl Discretizer {
    /// Fits split points and per-bin representatives from `values`.
    pub fn fit(values: &[f64], param: &ParameterDef, n_levels: usize) -> Result<Discretizer> {
        let (lo, hi, log_scale) = match param.domain {
            Domain::Numeric { lo, hi, log_scale } => (lo, hi, log_scale),
            Domain::Categorical { .. } => {
                return Err(Error::InvalidInput(format!(
                    "cannot discretize categorical parameter `{}`",
                    param.name
                )))
            }
        };
        if !(2..=5).contains(&n_levels) {
            return Err(Error::InvalidInput(format!(
                "n_levels must be between 2 and 5, got {n_levels}"
            )));
        }
        if values.is_empty() {
            return Err(Error::NoStatistics(param.name.clone()));
        }
        if let Some(&bad) = values
            .iter()
            .find(|v| !(v.is_finite() && **v >= lo && **v <= hi))
        {
            return Err(Error::OutOfRange {
                parameter: param.name.clone(),
                value: bad,
            });
        }

        let mut raw = values.to_vec();
        raw.sort_by(f64::total_cmp);
        let fitted: Vec<f64> = if log_scale {
            raw.iter().map(|v| v.log10()).collect()
        } else {
            raw.clone()
        };

        let mut split_points: Vec<f64> = Vec::with_capacity(n_levels - 1);
        for i in 1..n_levels {
            let (k, frac) = position(raw.len(), i, n_levels);
            let s = if log_scale {
                // Land exactly on an observed value whenever the interpolation does,
                // so bin boundaries never drift off data points through 10^log10(x).
                let k1 = (k + 1).min(raw.len() - 1);
                if frac == 0.0 || raw[k] == raw[k1] {
                    raw[k]
                } else {
                    10f64.powf(interpolate(&fitted, k, frac))
                }
            } else {
                interpolate(&fitted, k, frac)
            };
            // a split at or below the smallest value would only bound an empty lowest bin
            if s > raw[0] && split_points.last().is_none_or(|last| s > *last) {
                split_points.push(s);
            }
        }

        let n_bins = split_points.len() + 1;
        let bin_levels = centered_levels(n_bins);
        let mut representatives = Vec::with_capacity(n_bins);
        for b in 0..n_bins {
            let left = if b == 0 {
                f64::NEG_INFINITY
            } else {
                split_points[b - 1]
            };
            let right = if b + 1 == n_bins {
                f64::INFINITY
            } else {
                split_points[b]
            };
            let inside: Vec<f64> = raw
                .iter()
                .copied()
                .filter(|v| *v >= left && *v < right)
                .collect();
            let rep = if inside.is_empty() {
                let a = if b == 0 { lo } else { left };
                let z = if b + 1 == n_bins { hi } else { right };
                midpoint(a, z, log_scale)
            } else {
                let m = median_sorted(&inside, log_scale);
                if m >= left && m < right {
                    m
                } else {
                    inside[(inside.len() - 1) / 2]
                }
            };
            representatives.push(rep);
        }

        Ok(Discretizer {
            parameter: param.name.clone(),
            split_points,
            bin_levels,
            representatives,
            fitted_in_log: log_scale,
        })
    }

    pub fn parameter(&self) -> &str {
        &self.parameter
    }

    pub fn split_points(&self) -> &[f64] {
        &self.split_points
    }

    pub fn fitted_in_log(&self) -> bool {
        self.fitted_in_log
    }

    /// Levels of the bins in ascending order.
    pub fn bin_levels(&self) -> &[Level] {
        &self.bin_levels
    }

    pub fn bin_index(&self, x: f64) -> usize {
        self.split_points.partition_point(|s| *s <= x)
    }

    pub fn discretize(&self, x: f64) -> Level {
        self.bin_levels[self.bin_index(x)]
    }

    /// Representative value of the bin labelled `level`; a level without a bin of
    /// its own resolves to the bin with the nearest ordinal.
    pub fn representative_level(&self, level: Level) -> f64 {
        let idx = self
            .bin_levels
            .iter()
            .enumerate()
            .min_by_key(|(_, l)| l.ordinal().abs_diff(level.ordinal()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.representatives[idx]
    }

    pub fn representative(&self, label: &str) -> Result<f64> {
        Ok(self.representative_level(Level::from_label(label)?))
    }

    pub fn representatives(&self) -> impl Iterator<Item = (Level, f64)> + '_ {
        self.bin_levels
            .iter()
            .copied()
            .zip(self.representatives.iter().copied())
    }
}

fn midpoint(a: f64, b: f64, log_scale: bool) -> f64 {
    if log_scale {
        10f64.powf((a.log10() + b.log10()) / 2.0)
    } else {
        a + (b - a) / 2.0
    }
}

fn median_sorted(sorted: &[f64], log_scale: bool) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        return sorted[n / 2];
    }
    let (a, b) = (sorted[n / 2 - 1], sorted[n / 2]);
    if a == b {
        a
    } else {
        midpoint(a, b, log_scale)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiscretizerFile {
    parameter: String,
    split_points: Vec<f64>,
    level_labels: [String; 5],
    representatives: BTreeMap<String, f64>,
    fitted_in_log: bool,
}

impl Serialize for Discretizer {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DiscretizerFile {
            parameter: self.parameter.clone(),
            split_points: self.split_points.clone(),
            level_labels: DEFAULT_LEVEL_NAMES.map(String::from),
            representatives: self
                .representatives()
                .map(|(l, v)| (l.label().to_string(), v))
                .collect(),
            fitted_in_log: self.fitted_in_log,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Discretizer {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let f = DiscretizerFile::deserialize(d)?;
        if f.split_points.len() > 4 || f.split_points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(D::Error::custom(format!(
                "split points of `{}` must be at most 4 strictly increasing values",
                f.parameter
            )));
        }
        let bin_levels = centered_levels(f.split_points.len() + 1);
        let mut representatives = Vec::with_capacity(bin_levels.len());
        for l in &bin_levels {
            let v = f.representatives.get(l.label()).ok_or_else(|| {
                D::Error::custom(format!("missing representative for `{}`", l.label()))
            })?;
            representatives.push(*v);
        }
        if f.representatives.len() != bin_levels.len() {
            return Err(D::Error::custom("representatives for levels without a bin"));
        }
        Ok(Discretizer {
            parameter: f.parameter,
            split_points: f.split_points,
            bin_levels,
            representatives,
            fitted_in_log: f.fitted_in_log,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(lo: f64, hi: f64, log: bool) -> ParameterDef {
        ParameterDef::numeric("x", lo, hi, log).unwrap()
    }

    fn one_to_ten() -> Discretizer {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        Discretizer::fit(&v, &param(0.0, 20.0, false), 5).unwrap()
    }

    #[test]
    fn splits_of_one_to_ten() {
        let d = one_to_ten();
        let expect = [2.8, 4.6, 6.4, 8.2];
        for (a, b) in d.split_points().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert_eq!(d.split_points().len(), 4);
    }

    #[test]
    fn discretize_clamps_and_bins() {
        let d = one_to_ten();
        assert_eq!(d.discretize(3.5), Level::Low);
        assert_eq!(d.discretize(-100.0), Level::VeryLow);
        assert_eq!(d.discretize(1e9), Level::VeryHigh);
        // half-open: a split point belongs to the upper bin
        assert_eq!(d.discretize(d.split_points()[0]), Level::Low);
    }

    #[test]
    fn representative_medians() {
        let d = one_to_ten();
        assert_eq!(d.representative("very low").unwrap(), 1.5);
        assert_eq!(d.representative("medium").unwrap(), 5.5);
        assert_eq!(d.representative("very high").unwrap(), 9.5);
        assert!(d.representative("enormous").is_err());
    }

    #[test]
    fn empty_bin_takes_midpoint() {
        // positions 0.6, 1.2, 1.8, 2.4 over [0, 0, 10, 10] give quantiles 0, 2, 8, 10;
        // the split at the minimum is dropped, leaving four bins
        let v = [0.0, 0.0, 10.0, 10.0];
        let d = Discretizer::fit(&v, &param(0.0, 10.0, false), 5).unwrap();
        assert_eq!(d.split_points(), &[2.0, 8.0, 10.0]);
        let bins: Vec<_> = d.representatives().collect();
        assert_eq!(
            bins,
            vec![
                (Level::VeryLow, 0.0),
                (Level::Low, 5.0),
                (Level::Medium, 9.0),
                (Level::High, 10.0),
            ]
        );

        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        let d = Discretizer::fit(&v, &param(0.0, 20.0, false), 5).unwrap();
        let (a, b) = (d.split_points()[2], d.split_points()[3]);
        assert!((midpoint(a, b, false) - 7.3).abs() < 1e-12);
    }

    #[test]
    fn degenerate_values_collapse_to_medium() {
        let v = [3.25; 7];
        let d = Discretizer::fit(&v, &param(0.0, 10.0, false), 5).unwrap();
        assert!(d.split_points().is_empty());
        for x in [-1.0, 0.0, 3.25, 9.0, f64::MAX] {
            assert_eq!(d.discretize(x), Level::Medium);
        }
        assert_eq!(d.representative("medium").unwrap(), 3.25);
        assert_eq!(d.representative("very high").unwrap(), 3.25);
    }

    #[test]
    fn log_scale_splits_are_equally_spaced_in_exponent() {
        let v = [1e-5, 1e-4, 1e-3, 1e-2, 1e-1];
        let d = Discretizer::fit(&v, &param(1e-6, 1.0, true), 5).unwrap();
        let exps: Vec<f64> = (-5..=-1).map(f64::from).collect();
        for (i, s) in d.split_points().iter().enumerate() {
            let q = quantile_sorted(&exps, (i + 1) as f64 / 5.0);
            assert!((s.log10() - q).abs() < 1e-9, "{s} vs 10^{q}");
        }
        assert!(d.fitted_in_log());
    }

    #[test]
    fn errors() {
        let p = param(0.0, 1.0, false);
        assert!(matches!(
            Discretizer::fit(&[], &p, 5),
            Err(Error::NoStatistics(_))
        ));
        let e = Discretizer::fit(&[0.5, 2.0], &p, 5).unwrap_err();
        assert!(e.to_string().contains("`x`"));
        assert!(Discretizer::fit(&[0.5], &p, 6).is_err());
        let cat = ParameterDef::categorical("k", &["a"]).unwrap();
        assert!(Discretizer::fit(&[0.5], &cat, 5).is_err());
    }

    #[test]
    fn fewer_levels_use_centered_labels() {
        let v: Vec<f64> = (1..=9).map(f64::from).collect();
        let d = Discretizer::fit(&v, &param(0.0, 10.0, false), 3).unwrap();
        assert_eq!(d.bin_levels(), &[Level::Low, Level::Medium, Level::High]);
        assert_eq!(centered_levels(2), vec![Level::Low, Level::Medium]);
        assert_eq!(
            centered_levels(4),
            vec![Level::VeryLow, Level::Low, Level::Medium, Level::High]
        );
    }

    #[test]
    fn json_round_trip() {
        let d = one_to_ten();
        let s = serde_json::to_string(&d).unwrap();
        let back: Discretizer = serde_json::from_str(&s).unwrap();
        assert_eq!(d, back);
    }
}
