//! The proposed estimator: conditional quantile processes assembled from the
//! non-crossing bulk fit and the GPD tail, averaged over the covariate sample
//! into counterfactual distributions and inverted.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{build_grid, parse_level_spec, Dataset, ProbabilityGrid};
use crate::error::{Error, Result};
use crate::evt::{fit_gpd_mle, gpd_tail_quantile, GpdTailFit, DEFAULT_AD_REPLICATES};
use crate::qr::{fit_noncrossing, Design, QuantileFit};
use crate::threshold::{
    excesses, select_transition, Convention, TransitionSelection, DEFAULT_CANDIDATES,
    DEFAULT_LAMBDA,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, PartialOrd, Ord)]
pub enum Estimand {
    #[serde(rename = "QTE")]
    Qte,
    #[serde(rename = "QTT")]
    Qtt,
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimand::Qte => "QTE",
            Estimand::Qtt => "QTT",
        })
    }
}

impl FromStr for Estimand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "QTE" => Ok(Estimand::Qte),
            "QTT" => Ok(Estimand::Qtt),
            _ => Err(Error::InvalidArgument(format!("unknown estimand {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectEstimate {
    pub p: f64,
    pub estimand: Estimand,
    pub point: f64,
    pub q1: f64,
    pub q0: f64,
}

impl EffectEstimate {
    pub fn new(p: f64, estimand: Estimand, q1: f64, q0: f64) -> Self {
        Self {
            p,
            estimand,
            point: q1 - q0,
            q1,
            q0,
        }
    }
}

/// Right-continuous step distribution function with finitely many jumps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepCdf {
    support: Vec<f64>,
    cum_mass: Vec<f64>,
}

impl StepCdf {
    /// From explicit jump points and cumulative masses.
    pub fn new(support: Vec<f64>, cum_mass: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::EmptyInput);
        }
        if support.len() != cum_mass.len() {
            return Err(Error::DimensionMismatch {
                expected: support.len(),
                found: cum_mass.len(),
            });
        }
        if support.windows(2).any(|w| !(w[1] > w[0])) || support.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("support must be finite and strictly increasing".into()));
        }
        if cum_mass.windows(2).any(|w| w[1] < w[0])
            || cum_mass.iter().any(|v| !(0.0..=1.0).contains(v))
            || (cum_mass[cum_mass.len() - 1] - 1.0).abs() > 1e-12
        {
            return Err(Error::InvalidArgument(
                "cumulative mass must be nondecreasing in [0, 1] and end at 1".into(),
            ));
        }
        Ok(Self { support, cum_mass })
    }

    /// Weighted empirical distribution of `(value, weight)` pairs. Equal values
    /// are merged; masses are cumulative weights divided by the total.
    pub fn from_weighted(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        if points.iter().any(|(v, w)| !v.is_finite() || !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("values must be finite and weights nonnegative".into()));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut support: Vec<f64> = Vec::with_capacity(points.len());
        let mut cum: Vec<f64> = Vec::with_capacity(points.len());
        let mut running = 0.0;
        for (v, w) in points {
            running += w;
            if support.last() == Some(&v) {
                *cum.last_mut().expect("nonempty") = running;
            } else {
                support.push(v);
                cum.push(running);
            }
        }
        if !(running > 0.0) {
            return Err(Error::InvalidArgument("total weight must be positive".into()));
        }
        let cum_mass: Vec<f64> = cum.iter().map(|c| c / running).collect();
        Ok(Self { support, cum_mass })
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn cum_mass(&self) -> &[f64] {
        &self.cum_mass
    }

    /// `F(y)`.
    pub fn eval(&self, y: f64) -> f64 {
        let k = self.support.partition_point(|&s| s <= y);
        if k == 0 {
            0.0
        } else {
            self.cum_mass[k - 1]
        }
    }
}

/// `inf{z : F(z) ≥ p}`.
pub fn invert_cdf(cdf: &StepCdf, p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidArgument(format!("probability {p} outside (0, 1]")));
    }
    let k = cdf.cum_mass.partition_point(|&c| c < p);
    cdf.support
        .get(k)
        .copied()
        .ok_or_else(|| Error::Internal(format!("level {p} exceeds the total mass")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridConfig {
    pub bulk_points: usize,
    pub extreme_points: usize,
    pub tau_max: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            bulk_points: 75,
            extreme_points: 25,
            tau_max: 0.9995,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProposedFit {
    pub grid: ProbabilityGrid,
    pub bulk: QuantileFit,
    pub tail: GpdTailFit,
    pub n: usize,
    pub n_treated: usize,
    pub n_covariates: usize,
    pub warnings: Vec<String>,
}

/// Fits the bulk quantile process at the grid's bulk levels and the GPD tail
/// above the selected threshold.
pub fn fit_proposed(
    data: &Dataset,
    selection: &TransitionSelection,
    config: GridConfig,
) -> Result<ProposedFit> {
    let tau_u = selection.selected_level;
    let grid = build_grid(tau_u, config.bulk_points, config.extreme_points, config.tau_max)?;
    let design = Design::from_dataset(data);
    let y = data.outcomes();
    let threshold = selection.selected().coefficients.clone();
    if threshold.len() != design.p() {
        return Err(Error::DimensionMismatch {
            expected: design.p(),
            found: threshold.len(),
        });
    }
    let ex = excesses(&design, &y, &threshold);
    let params = fit_gpd_mle(&ex)?;
    let bulk = fit_noncrossing(&design, &y, grid.bulk_levels())?;
    let zeta = ex.len() as f64 / data.n() as f64;
    let mut warnings = selection.warnings.clone();
    if params.xi <= 0.0 {
        warnings.push(format!(
            "fitted tail shape {} is not positive; tail quantiles are not heavy-tailed",
            params.xi
        ));
    }
    let shallow = grid.extreme_levels().iter().filter(|&&t| 1.0 - t >= zeta).count();
    if shallow > 0 {
        warnings.push(format!(
            "{shallow} extreme level(s) lie at or below the empirical exceedance rate {zeta}; \
             they are set to the threshold"
        ));
    }
    Ok(ProposedFit {
        grid,
        bulk,
        tail: GpdTailFit {
            threshold_coefficients: threshold,
            params,
            exceedance_rate: zeta,
            n_exceedances: ex.len(),
        },
        n: data.n(),
        n_treated: data.n_treated(),
        n_covariates: data.n_covariates(),
        warnings,
    })
}

/// The unit's J conditional quantiles under treatment `t`, rearranged into
/// nondecreasing order.
pub fn conditional_quantiles(fit: &ProposedFit, treated: bool, covariates: &[f64]) -> Result<Vec<f64>> {
    if covariates.len() != fit.n_covariates {
        return Err(Error::DimensionMismatch {
            expected: fit.n_covariates,
            found: covariates.len(),
        });
    }
    let mut q = fit.bulk.predict_quantiles(treated, covariates)?;
    let alpha = &fit.tail.threshold_coefficients;
    let u_star = alpha[0]
        + if treated { alpha[1] } else { 0.0 }
        + covariates.iter().zip(&alpha[2..]).map(|(x, a)| x * a).sum::<f64>();
    let zeta = fit.tail.exceedance_rate;
    for &tau in fit.grid.extreme_levels() {
        q.push(if 1.0 - tau >= zeta {
            u_star
        } else {
            gpd_tail_quantile(tau, u_star, fit.tail.params, zeta)?
        });
    }
    q.sort_by(f64::total_cmp);
    Ok(q)
}

fn average_cdf(fit: &ProposedFit, data: &Dataset, treated: bool, only_treated: bool) -> Result<StepCdf> {
    if data.n_covariates() != fit.n_covariates {
        return Err(Error::DimensionMismatch {
            expected: fit.n_covariates,
            found: data.n_covariates(),
        });
    }
    let weights = fit.grid.weights();
    let per_unit: Vec<Vec<f64>> = data
        .records()
        .par_iter()
        .filter(|r| !only_treated || r.treated)
        .map(|r| conditional_quantiles(fit, treated, &r.covariates))
        .collect::<Result<_>>()?;
    if per_unit.is_empty() {
        return Err(Error::EstimandUndefined("no treated units".into()));
    }
    let points = per_unit
        .into_iter()
        .flat_map(|q| q.into_iter().zip(weights.iter().copied()))
        .collect();
    StepCdf::from_weighted(points)
}

/// `F̂_t(y) = n⁻¹ Σ_i Ĝ(y | t, X_i)`.
pub fn marginal_cdf(fit: &ProposedFit, data: &Dataset, treated: bool) -> Result<StepCdf> {
    average_cdf(fit, data, treated, false)
}

/// `F̂_{t|1}(y)`: the average over treated units only.
pub fn treated_cdf(fit: &ProposedFit, data: &Dataset, treated: bool) -> Result<StepCdf> {
    average_cdf(fit, data, treated, true)
}

fn check_p_list(p_list: &[f64], upper: f64) -> Result<()> {
    if p_list.is_empty() {
        return Err(Error::InvalidArgument("no probability levels requested".into()));
    }
    if let Some(p) = p_list.iter().find(|&&p| !(p > 0.0 && p <= upper)) {
        return Err(Error::InvalidArgument(format!("probability {p} outside (0, {upper}]")));
    }
    Ok(())
}

/// Inverts a pair of counterfactual distributions at each level.
pub fn effects_from_cdfs(
    f1: &StepCdf,
    f0: &StepCdf,
    p_list: &[f64],
    estimand: Estimand,
) -> Result<Vec<EffectEstimate>> {
    p_list
        .iter()
        .map(|&p| Ok(EffectEstimate::new(p, estimand, invert_cdf(f1, p)?, invert_cdf(f0, p)?)))
        .collect()
}

/// `η̂_p` (QTE) or `ζ̂_p` (QTT) at each requested level.
pub fn estimate_effects(
    fit: &ProposedFit,
    data: &Dataset,
    p_list: &[f64],
    estimand: Estimand,
) -> Result<Vec<EffectEstimate>> {
    check_p_list(p_list, fit.grid.max_level())?;
    let (f1, f0) = match estimand {
        Estimand::Qte => (marginal_cdf(fit, data, true)?, marginal_cdf(fit, data, false)?),
        Estimand::Qtt => (treated_cdf(fit, data, true)?, treated_cdf(fit, data, false)?),
    };
    effects_from_cdfs(&f1, &f0, p_list, estimand)
}

/// Settings of the full proposed pipeline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProposedConfig {
    pub candidates: Vec<f64>,
    pub lambda: f64,
    /// Bootstrap replicates per goodness-of-fit p-value.
    pub ad_replicates: usize,
    pub convention: Convention,
    pub grid: GridConfig,
}

impl Default for ProposedConfig {
    fn default() -> Self {
        Self {
            candidates: parse_level_spec(DEFAULT_CANDIDATES).expect("default candidate grid is valid"),
            lambda: DEFAULT_LAMBDA,
            ad_replicates: DEFAULT_AD_REPLICATES,
            convention: Convention::default(),
            grid: GridConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProposedRun {
    pub selection: TransitionSelection,
    pub fit: ProposedFit,
    pub effects: Vec<EffectEstimate>,
}

/// Threshold selection, fit and effects in one call.
pub fn run_proposed(
    data: &Dataset,
    config: &ProposedConfig,
    p_list: &[f64],
    estimands: &[Estimand],
    seed: u64,
) -> Result<ProposedRun> {
    check_p_list(p_list, config.grid.tau_max)?;
    data.require_both_arms()?;
    let selection = select_transition(
        data,
        &config.candidates,
        config.lambda,
        config.ad_replicates,
        seed,
        config.convention,
    )?;
    let fit = fit_proposed(data, &selection, config.grid)?;
    let mut effects = Vec::new();
    for &e in estimands {
        effects.extend(estimate_effects(&fit, data, p_list, e)?);
    }
    Ok(ProposedRun {
        selection,
        fit,
        effects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inversion_fixtures() {
        let cdf = StepCdf::new(vec![1.0, 2.0, 3.0], vec![0.2, 0.5, 1.0]).unwrap();
        assert_eq!(invert_cdf(&cdf, 0.5).unwrap(), 2.0);
        assert_eq!(invert_cdf(&cdf, 0.51).unwrap(), 3.0);
        assert_eq!(invert_cdf(&cdf, 0.2).unwrap(), 1.0);
        assert_eq!(invert_cdf(&cdf, 1.0).unwrap(), 3.0);
        assert!(invert_cdf(&cdf, 0.0).is_err());
    }

    #[test]
    fn weighted_ties_merge() {
        let cdf = StepCdf::from_weighted(vec![(2.0, 1.0), (1.0, 1.0), (2.0, 2.0)]).unwrap();
        assert_eq!(cdf.support(), &[1.0, 2.0]);
        assert_eq!(cdf.cum_mass(), &[0.25, 1.0]);
        assert_eq!(cdf.eval(1.5), 0.25);
        assert_eq!(cdf.eval(0.5), 0.0);
    }

    #[test]
    fn uniform_weights_give_empirical_quantiles() {
        let ys = [5.0, 1.0, 4.0, 2.0, 3.0];
        let cdf = StepCdf::from_weighted(ys.iter().map(|&y| (y, 1.0)).collect()).unwrap();
        assert_eq!(invert_cdf(&cdf, 0.4).unwrap(), 2.0);
        assert_eq!(invert_cdf(&cdf, 0.41).unwrap(), 3.0);
    }

    #[test]
    fn estimand_parses() {
        assert_eq!("qtt".parse::<Estimand>().unwrap(), Estimand::Qtt);
        assert_eq!(serde_json::to_string(&Estimand::Qte).unwrap(), "\"QTE\"");
    }
}
