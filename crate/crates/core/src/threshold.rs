//! Selection of the bulk/tail transition level.
//!
//! Candidate thresholds come from single-level quantile regressions at an
//! increasing list of levels. Each candidate's excesses are tested for GPD
//! fit, and ForwardStop over the ordered p-values decides how many of the
//! lower candidates are rejected.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{validate_levels, Dataset};
use crate::error::{Error, Result};
use crate::evt::{ad_pvalue, MIN_EXCEEDANCES};
use crate::qr::{fit_single, Design};
use crate::rng;

pub const DEFAULT_LAMBDA: f64 = 0.05;
pub const DEFAULT_CANDIDATES: &str = "0.75:0.99:10";

/// Which candidate becomes the transition level once ForwardStop has
/// returned `k̂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// `τ_u = τ_{k̂}` (the last rejected candidate), `τ_1` when nothing is rejected.
    #[default]
    PaperLiteral,
    /// `τ_u = τ_{k̂+1}` (the first candidate not rejected).
    FirstAccepted,
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Convention::PaperLiteral => "paper-literal",
            Convention::FirstAccepted => "first-accepted",
        })
    }
}

impl FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-literal" => Ok(Convention::PaperLiteral),
            "first-accepted" => Ok(Convention::FirstAccepted),
            other => Err(Error::InvalidArgument(format!(
                "unknown convention {other:?} (expected paper-literal or first-accepted)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdCandidate {
    pub level: f64,
    pub coefficients: Vec<f64>,
    pub n_exceedances: usize,
    /// Goodness-of-fit p-value; 0 for untestable candidates.
    pub p_value: f64,
    pub ad_statistic: Option<f64>,
    /// Why the candidate could not be tested, if it could not.
    pub untestable: Option<String>,
}

impl ThresholdCandidate {
    pub fn is_testable(&self) -> bool {
        self.untestable.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionSelection {
    pub candidates: Vec<ThresholdCandidate>,
    pub k_hat: usize,
    /// Index into `candidates` of the selected level.
    pub selected_index: usize,
    pub selected_level: f64,
    pub lambda: f64,
    pub convention: Convention,
    pub n_boot: usize,
    pub warnings: Vec<String>,
}

impl TransitionSelection {
    pub fn selected(&self) -> &ThresholdCandidate {
        &self.candidates[self.selected_index]
    }
}

/// Residuals this small relative to the outcome count as lying on the
/// threshold (fitted hyperplanes interpolate some observations).
const ON_THRESHOLD_RTOL: f64 = 1e-10;

/// Excesses `y_i − w_iᵀβ` of the units strictly above the fitted threshold.
pub fn excesses(design: &Design, y: &[f64], beta: &[f64]) -> Vec<f64> {
    (0..design.n())
        .filter_map(|i| {
            let u: f64 = design.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
            let e = y[i] - u;
            (e > ON_THRESHOLD_RTOL * y[i].abs().max(u.abs())).then_some(e)
        })
        .collect()
}

/// Fits a quantile regression threshold at each level and counts the units
/// above it. P-values are left at zero.
pub fn generate_candidates(data: &Dataset, levels: &[f64]) -> Result<Vec<ThresholdCandidate>> {
    validate_levels(levels)?;
    let design = Design::from_dataset(data);
    design.check_full_rank()?;
    let y = data.outcomes();
    levels
        .par_iter()
        .map(|&level| {
            let fit = fit_single(&design, &y, level)?;
            let n_exceedances = excesses(&design, &y, &fit.coefficients).len();
            Ok(ThresholdCandidate {
                level,
                coefficients: fit.coefficients,
                n_exceedances,
                p_value: 0.0,
                ad_statistic: None,
                untestable: None,
            })
        })
        .collect()
}

/// ForwardStop: the largest `k` with `−(1/k) Σ_{i≤k} log(1 − p_i) ≤ λ`, or 0.
/// P-values are clamped to `[0, 1 − 1e−15]`.
pub fn forward_stop(p_values: &[f64], lambda: f64) -> usize {
    let mut sum = 0.0;
    let mut k_hat = 0;
    for (k, &p) in p_values.iter().enumerate() {
        sum -= (-p.clamp(0.0, 1.0 - 1e-15)).ln_1p();
        if sum / (k + 1) as f64 <= lambda {
            k_hat = k + 1;
        }
    }
    k_hat
}

/// Candidate generation, Anderson–Darling p-values for every candidate
/// (bootstrap stream `child_seed(seed, i)` for candidate `i`), ForwardStop,
/// and the convention's choice of transition level.
pub fn select_transition(
    data: &Dataset,
    levels: &[f64],
    lambda: f64,
    n_boot: usize,
    seed: u64,
    convention: Convention,
) -> Result<TransitionSelection> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    if n_boot < 99 {
        return Err(Error::InvalidArgument(format!(
            "at least 99 goodness-of-fit replicates required, got {n_boot}"
        )));
    }
    let mut candidates = generate_candidates(data, levels)?;
    let design = Design::from_dataset(data);
    let y = data.outcomes();
    let tested: Vec<(f64, Option<f64>, Option<String>)> = candidates
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            if c.n_exceedances < MIN_EXCEEDANCES {
                return (
                    0.0,
                    None,
                    Some(format!("{} exceedances (< {MIN_EXCEEDANCES})", c.n_exceedances)),
                );
            }
            let ex = excesses(&design, &y, &c.coefficients);
            match ad_pvalue(&ex, n_boot, rng::child_seed(seed, i as u64)) {
                Ok(r) => (r.p_value, Some(r.statistic), None),
                Err(e) => (0.0, None, Some(e.to_string())),
            }
        })
        .collect();
    for (c, (p, stat, why)) in candidates.iter_mut().zip(tested) {
        c.p_value = p;
        c.ad_statistic = stat;
        c.untestable = why;
    }
    if candidates.iter().all(|c| !c.is_testable()) {
        return Err(Error::SelectionFailure(
            "no candidate threshold has a testable tail".into(),
        ));
    }

    let p_values: Vec<f64> = candidates.iter().map(|c| c.p_value).collect();
    let k_hat = forward_stop(&p_values, lambda);
    let l = candidates.len();
    let mut warnings = Vec::new();
    let mut index = match convention {
        Convention::PaperLiteral => k_hat.max(1) - 1,
        Convention::FirstAccepted => k_hat.min(l - 1),
    };
    if k_hat == l {
        warnings.push(format!(
            "every candidate was rejected; using the last level {}",
            candidates[l - 1].level
        ));
    }
    if !candidates[index].is_testable() {
        let fallback = (0..index)
            .rev()
            .chain(index + 1..l)
            .find(|&i| candidates[i].is_testable())
            .expect("at least one candidate is testable");
        warnings.push(format!(
            "selected level {} has an untestable tail; using {} instead",
            candidates[index].level, candidates[fallback].level
        ));
        index = fallback;
    }
    Ok(TransitionSelection {
        selected_level: candidates[index].level,
        selected_index: index,
        candidates,
        k_hat,
        lambda,
        convention,
        n_boot,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_stop_fixtures() {
        assert_eq!(forward_stop(&[0.001, 0.002, 0.9], 0.05), 2);
        assert_eq!(forward_stop(&[0.9, 0.9], 0.05), 0);
        assert_eq!(forward_stop(&[0.0, 0.0, 0.0], 1e-12), 3);
        assert_eq!(forward_stop(&[1.0, 1.0], 1e9), 2);
        assert_eq!(forward_stop(&[], 0.05), 0);
    }

    #[test]
    fn convention_round_trips() {
        for c in [Convention::PaperLiteral, Convention::FirstAccepted] {
            assert_eq!(c.to_string().parse::<Convention>().unwrap(), c);
        }
        assert!("last".parse::<Convention>().is_err());
    }
}
