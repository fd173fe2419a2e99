//! Nonparametric bootstrap and b-out-of-n subsampling.
//!
//! Replicate `j` draws its row indices from `rng::stream(seed, j)` and hands
//! `rng::child_seed(seed, j)` to the estimator, so output does not depend on
//! thread scheduling. Summaries are computed over the sorted replicate list.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;

pub const MIN_REPLICATES: usize = 100;
pub const DEFAULT_REPLICATES: usize = 1000;
pub const MIN_SUBSAMPLE: usize = 10;
/// Share of failed replicates above which the bootstrap fails.
pub const MAX_FAILURE_SHARE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMethod {
    Full,
    BOutOfN,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CiMethod {
    /// Empirical percentiles with linear interpolation.
    #[default]
    Percentile,
    /// Percentiles reflected about the point estimate.
    Basic,
}

impl fmt::Display for CiMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CiMethod::Percentile => "percentile",
            CiMethod::Basic => "basic",
        })
    }
}

impl FromStr for CiMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "percentile" => Ok(CiMethod::Percentile),
            "basic" => Ok(CiMethod::Basic),
            other => Err(Error::InvalidArgument(format!(
                "unknown interval method {other:?} (expected percentile or basic)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    pub ci_level: f64,
    pub ci_method: CiMethod,
}

impl BootstrapConfig {
    pub fn new(replicates: usize, seed: u64) -> Self {
        Self {
            replicates,
            seed,
            ci_level: 0.95,
            ci_method: CiMethod::Percentile,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replicates < MIN_REPLICATES {
            return Err(Error::InvalidArgument(format!(
                "at least {MIN_REPLICATES} bootstrap replicates required, got {}",
                self.replicates
            )));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "confidence level must lie in (0, 1), got {}",
                self.ci_level
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapSummary {
    pub point: f64,
    /// Successful replicate values in replicate order.
    pub replicates: Vec<f64>,
    pub n_failed: usize,
    pub bias: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub method: BootstrapMethod,
    pub b: Option<usize>,
    pub seed: u64,
}

/// `ceil(n^{2/3})`, computed exactly.
pub fn default_b(n: usize) -> usize {
    let mut b = (n as f64).powf(2.0 / 3.0).floor() as usize;
    while (b as u128).pow(3) < (n as u128).pow(2) {
        b += 1;
    }
    while b > 0 && ((b - 1) as u128).pow(3) >= (n as u128).pow(2) {
        b -= 1;
    }
    b
}

/// Linear-interpolation percentile of sorted values.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bias, standard error and interval from a point estimate and replicate
/// values.
pub fn summarize(
    point: f64,
    replicates: Vec<f64>,
    n_failed: usize,
    config: &BootstrapConfig,
    method: BootstrapMethod,
    b: Option<usize>,
) -> BootstrapSummary {
    let mut sorted = replicates.clone();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / m;
    let se = if sorted.len() > 1 {
        (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    let alpha = 1.0 - config.ci_level;
    let lo = percentile(&sorted, alpha / 2.0);
    let hi = percentile(&sorted, 1.0 - alpha / 2.0);
    let (ci_low, ci_high) = match config.ci_method {
        CiMethod::Percentile => (lo, hi),
        CiMethod::Basic => (2.0 * point - hi, 2.0 * point - lo),
    };
    BootstrapSummary {
        point,
        replicates,
        n_failed,
        bias: mean - point,
        se,
        ci_low,
        ci_high,
        method,
        b,
        seed: config.seed,
    }
}

fn run<F>(data: &Dataset, estimator: F, size: usize, config: &BootstrapConfig, method: BootstrapMethod) -> Result<Vec<BootstrapSummary>>
where
    F: Fn(&Dataset, u64) -> Result<Vec<f64>> + Sync,
{
    config.validate()?;
    let point = estimator(data, config.seed)?;
    let n = data.n();
    let outcomes: Vec<Result<Vec<f64>>> = (0..config.replicates)
        .into_par_iter()
        .map(|j| {
            let mut r = rng::stream(config.seed, j as u64);
            let idx: Vec<usize> = (0..size).map(|_| r.random_range(0..n)).collect();
            let v = estimator(&data.resample(&idx), rng::child_seed(config.seed, j as u64))?;
            if v.len() != point.len() {
                return Err(Error::DimensionMismatch {
                    expected: point.len(),
                    found: v.len(),
                });
            }
            Ok(v)
        })
        .collect();

    let mut kinds: BTreeMap<&'static str, usize> = BTreeMap::new();
    let mut ok = Vec::new();
    for o in &outcomes {
        match o {
            Ok(v) if v.iter().all(|x| x.is_finite()) => ok.push(v),
            Ok(_) => *kinds.entry("non-finite").or_default() += 1,
            Err(e) => *kinds.entry(e.kind()).or_default() += 1,
        }
    }
    let failed = config.replicates - ok.len();
    if ok.is_empty() || failed as f64 > MAX_FAILURE_SHARE * config.replicates as f64 {
        let dominant = kinds
            .iter()
            .max_by_key(|(_, c)| **c)
            .map(|(k, _)| k.to_string())
            .unwrap_or_default();
        return Err(Error::ReplicateFailures {
            failed,
            total: config.replicates,
            dominant,
        });
    }
    let b = (method == BootstrapMethod::BOutOfN).then_some(size);
    Ok(point
        .iter()
        .enumerate()
        .map(|(k, &pt)| summarize(pt, ok.iter().map(|v| v[k]).collect(), failed, config, method, b))
        .collect())
}

/// Resamples of `n` rows with replacement; one summary per statistic
/// returned by `estimator`.
pub fn full_bootstrap<F>(data: &Dataset, estimator: F, config: &BootstrapConfig) -> Result<Vec<BootstrapSummary>>
where
    F: Fn(&Dataset, u64) -> Result<Vec<f64>> + Sync,
{
    run(data, estimator, data.n(), config, BootstrapMethod::Full)
}

/// Resamples of `b` rows with replacement. Intervals are percentiles of the
/// subsample estimates without rate rescaling.
pub fn b_out_of_n_bootstrap<F>(data: &Dataset, estimator: F, b: usize, config: &BootstrapConfig) -> Result<Vec<BootstrapSummary>>
where
    F: Fn(&Dataset, u64) -> Result<Vec<f64>> + Sync,
{
    if b < MIN_SUBSAMPLE || b > data.n() {
        return Err(Error::InvalidArgument(format!(
            "subsample size must lie in [{MIN_SUBSAMPLE}, {}], got {b}",
            data.n()
        )));
    }
    run(data, estimator, b, config, BootstrapMethod::BOutOfN)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_fixture() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = summarize(50.0, v, 0, &BootstrapConfig::new(100, 0), BootstrapMethod::Full, None);
        assert!((s.ci_low - 3.475).abs() < 1e-12);
        assert!((s.ci_high - 97.525).abs() < 1e-12);
        assert!((s.bias - 0.5).abs() < 1e-12);
    }

    #[test]
    fn basic_interval_reflects() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let c = BootstrapConfig {
            ci_method: CiMethod::Basic,
            ..BootstrapConfig::new(100, 0)
        };
        let s = summarize(50.0, v, 0, &c, BootstrapMethod::Full, None);
        assert!((s.ci_low - 2.475).abs() < 1e-12);
        assert!((s.ci_high - 96.525).abs() < 1e-12);
    }

    #[test]
    fn default_subsample_sizes() {
        assert_eq!(default_b(1000), 100);
        assert_eq!(default_b(1001), 101);
        assert_eq!(default_b(8), 4);
        assert_eq!(default_b(500), 63);
    }
}
