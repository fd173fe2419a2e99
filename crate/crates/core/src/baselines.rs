//! Comparator estimators: logistic propensity model, inverse propensity
//! weighted distribution functions, the weighted check-loss estimator, and a
//! normal linear outcome model after a Box–Cox transform.

use serde::Serialize;
use statrs::function::erf::erfc;

use crate::counterfactual::{effects_from_cdfs, invert_cdf, EffectEstimate, Estimand, StepCdf};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::evt::brent_root;
use crate::linalg;
use crate::qr::check_loss;

const MAX_NEWTON: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropensityFit {
    /// Intercept then one coefficient per covariate.
    pub gamma: Vec<f64>,
    /// Unclamped fitted probabilities.
    pub fitted: Vec<f64>,
    pub iterations: usize,
}

/// Bounds applied to fitted propensities before they become weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Clamp {
    pub lower: f64,
    pub upper: f64,
}

impl Default for Clamp {
    fn default() -> Self {
        Self {
            lower: 0.01,
            upper: 0.99,
        }
    }
}

impl Clamp {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower > 0.0 && lower < upper && upper < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "propensity clamp needs 0 < lower < upper < 1, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper })
    }

    fn apply(&self, p: f64) -> f64 {
        p.clamp(self.lower, self.upper)
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^η)` without overflow.
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// Logistic regression of the treatment indicator on `(1, X)` by damped
/// Newton iterations.
pub fn fit_propensity(data: &Dataset) -> Result<PropensityFit> {
    data.require_both_arms()?;
    let n = data.n();
    let p = 1 + data.n_covariates();
    let x: Vec<f64> = data
        .records()
        .iter()
        .flat_map(|r| std::iter::once(1.0).chain(r.covariates.iter().copied()))
        .collect();
    let d: Vec<f64> = data.records().iter().map(|r| r.treatment()).collect();
    crate::qr::Design::new(n, p, x.clone())?.check_full_rank()?;
    let row = |i: usize| &x[i * p..(i + 1) * p];
    let linear = |g: &[f64]| -> Vec<f64> {
        (0..n).map(|i| row(i).iter().zip(g).map(|(a, b)| a * b).sum()).collect()
    };
    let loglik = |eta: &[f64]| -> f64 { eta.iter().zip(&d).map(|(e, di)| di * e - softplus(*e)).sum() };

    let mean_d = d.iter().sum::<f64>() / n as f64;
    let mut gamma = vec![0.0; p];
    gamma[0] = (mean_d / (1.0 - mean_d)).ln();
    let mut eta = linear(&gamma);
    let mut ll = loglik(&eta);
    for iter in 0..MAX_NEWTON {
        let mut grad = vec![0.0; p];
        let mut hess = vec![0.0; p * p];
        for i in 0..n {
            let pi = sigmoid(eta[i]);
            let wgt = pi * (1.0 - pi);
            let r = row(i);
            for a in 0..p {
                grad[a] += (d[i] - pi) * r[a];
                for b in 0..=a {
                    hess[a * p + b] += wgt * r[a] * r[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                hess[b * p + a] = hess[a * p + b];
            }
        }
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm <= 1e-8 {
            return Ok(finish(gamma, &eta, iter));
        }
        if separated(&eta, &d) {
            return Err(Error::Separation);
        }
        let step = linalg::spd_solve(&hess, p, &grad).ok_or(Error::Separation)?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = gamma.iter().zip(&step).map(|(g, s)| g + t * s).collect();
            let cand_eta = linear(&cand);
            let cand_ll = loglik(&cand_eta);
            if cand_ll >= ll - 1e-12 * ll.abs() {
                gamma = cand;
                eta = cand_eta;
                ll = cand_ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No further progress is representable.
            if grad_norm <= 1e-6 {
                return Ok(finish(gamma, &eta, iter));
            }
            break;
        }
    }
    if separated(&eta, &d) {
        return Err(Error::Separation);
    }
    Err(Error::NonConvergence(format!(
        "logistic regression did not converge in {MAX_NEWTON} iterations"
    )))
}

fn finish(gamma: Vec<f64>, eta: &[f64], iterations: usize) -> PropensityFit {
    PropensityFit {
        gamma,
        fitted: eta.iter().map(|&e| sigmoid(e)).collect(),
        iterations,
    }
}

/// Perfect classification with diverging linear predictors.
fn separated(eta: &[f64], d: &[f64]) -> bool {
    let perfect = eta.iter().zip(d).all(|(e, di)| (*e > 0.0) == (*di > 0.5));
    perfect && eta.iter().map(|e| e.abs()).fold(f64::INFINITY, f64::min) > 5.0
        && eta.iter().map(|e| e.abs()).fold(0.0, f64::max) > 30.0
}

/// Per-unit weights of the two arms: `(treated arm, control arm)`, each as
/// `(outcome, weight)` pairs. Weights are divided by the arm's largest
/// weight so equal weights are exactly one.
pub fn arm_weights(
    data: &Dataset,
    propensity: &PropensityFit,
    estimand: Estimand,
    clamp: Clamp,
) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>)> {
    if propensity.fitted.len() != data.n() {
        return Err(Error::DimensionMismatch {
            expected: data.n(),
            found: propensity.fitted.len(),
        });
    }
    let mut treated = Vec::new();
    let mut control = Vec::new();
    for (r, &pi) in data.records().iter().zip(&propensity.fitted) {
        let pi = clamp.apply(pi);
        if r.treated {
            let w = match estimand {
                Estimand::Qte => 1.0 / pi,
                Estimand::Qtt => 1.0,
            };
            treated.push((r.outcome, w));
        } else {
            let w = match estimand {
                Estimand::Qte => 1.0 / (1.0 - pi),
                Estimand::Qtt => pi / (1.0 - pi),
            };
            control.push((r.outcome, w));
        }
    }
    for (arm, name) in [(&mut treated, "treated"), (&mut control, "control")] {
        if arm.is_empty() {
            return Err(Error::EstimandUndefined(format!("empty {name} arm")));
        }
        let max = arm.iter().map(|(_, w)| *w).fold(0.0, f64::max);
        arm.iter_mut().for_each(|(_, w)| *w /= max);
    }
    Ok((treated, control))
}

/// Weighted empirical distributions of each arm, inverted and differenced.
pub fn ipw_effects(
    data: &Dataset,
    propensity: &PropensityFit,
    p_list: &[f64],
    estimand: Estimand,
    clamp: Clamp,
) -> Result<Vec<EffectEstimate>> {
    let (t, c) = arm_weights(data, propensity, estimand, clamp)?;
    let f1 = StepCdf::from_weighted(t)?;
    let f0 = StepCdf::from_weighted(c)?;
    effects_from_cdfs(&f1, &f0, p_list, estimand)
}

/// Minimizer of `Σ ω_i ρ_p(y_i − q)`: the smallest `y` whose normalized
/// cumulative weight reaches `p`, found by scanning the subgradient.
pub fn weighted_quantile(points: &[(f64, f64)], p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidArgument(format!("probability {p} outside (0, 1]")));
    }
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = sorted.iter().map(|(_, w)| w).sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("total weight must be positive".into()));
    }
    let mut cum = 0.0;
    for (k, &(y, w)) in sorted.iter().enumerate() {
        cum += w;
        // The subgradient at y changes sign once the mass at or below y
        // reaches p; within a run of ties only the last cumulative counts.
        let last_of_tie = sorted.get(k + 1).is_none_or(|next| next.0 != y);
        if last_of_tie && cum / total >= p {
            return Ok(y);
        }
    }
    Ok(sorted[sorted.len() - 1].0)
}

/// Weighted check-loss objective, used to verify [`weighted_quantile`].
pub fn weighted_check_loss(points: &[(f64, f64)], p: f64, q: f64) -> f64 {
    points.iter().map(|&(y, w)| w * check_loss(y - q, p)).sum()
}

/// The weighted check-loss (Firpo) estimator with the IPW weights.
pub fn firpo_effects(
    data: &Dataset,
    propensity: &PropensityFit,
    p_list: &[f64],
    estimand: Estimand,
    clamp: Clamp,
) -> Result<Vec<EffectEstimate>> {
    let (t, c) = arm_weights(data, propensity, estimand, clamp)?;
    p_list
        .iter()
        .map(|&p| {
            Ok(EffectEstimate::new(
                p,
                estimand,
                weighted_quantile(&t, p)?,
                weighted_quantile(&c, p)?,
            ))
        })
        .collect()
}

pub const BOX_COX_GRID: [f64; 9] = [-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxCoxFit {
    pub bc_exponent: f64,
    /// Intercept, treatment, covariates, then treatment × covariate terms
    /// when interactions are on.
    pub regression_coefficients: Vec<f64>,
    pub residual_sd: f64,
    pub shift: f64,
    pub interactions: bool,
    pub profile_loglik: f64,
}

fn box_cox(y: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        y.ln()
    } else {
        (y.powf(lambda) - 1.0) / lambda
    }
}

fn outcome_row(treated: bool, covariates: &[f64], interactions: bool) -> Vec<f64> {
    let d = if treated { 1.0 } else { 0.0 };
    let mut row = vec![1.0, d];
    row.extend_from_slice(covariates);
    if interactions {
        row.extend(covariates.iter().map(|x| d * x));
    }
    row
}

/// Chooses the Box–Cox exponent on [`BOX_COX_GRID`] by profile likelihood
/// (with the Jacobian term) and fits the normal linear model.
pub fn fit_box_cox(data: &Dataset, interactions: bool) -> Result<BoxCoxFit> {
    let n = data.n();
    let ys = data.outcomes();
    let min = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = if min <= 0.0 { 1.0 - min } else { 0.0 };
    let shifted: Vec<f64> = ys.iter().map(|y| y + shift).collect();
    if shifted.iter().any(|&y| !(y > 0.0) || !y.is_finite()) {
        return Err(Error::Transform("outcomes are not positive after shifting".into()));
    }
    let x: Vec<f64> = data
        .records()
        .iter()
        .flat_map(|r| outcome_row(r.treated, &r.covariates, interactions))
        .collect();
    let p = x.len() / n;
    crate::qr::Design::new(n, p, x.clone())?.check_full_rank()?;
    let log_sum: f64 = shifted.iter().map(|y| y.ln()).sum();
    let mut best: Option<BoxCoxFit> = None;
    for &lambda in &BOX_COX_GRID {
        let z: Vec<f64> = shifted.iter().map(|&y| box_cox(y, lambda)).collect();
        if z.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let Some(beta) = linalg::least_squares(&x, n, p, &z) else {
            continue;
        };
        let rss: f64 = (0..n)
            .map(|i| {
                let fit: f64 = x[i * p..(i + 1) * p].iter().zip(&beta).map(|(a, b)| a * b).sum();
                (z[i] - fit).powi(2)
            })
            .sum();
        let var = rss / n as f64;
        if !(var > 0.0) || !var.is_finite() {
            continue;
        }
        let ll = -0.5 * n as f64 * var.ln() + (lambda - 1.0) * log_sum;
        if best.as_ref().is_none_or(|b| ll > b.profile_loglik) {
            best = Some(BoxCoxFit {
                bc_exponent: lambda,
                regression_coefficients: beta,
                residual_sd: var.sqrt(),
                shift,
                interactions,
                profile_loglik: ll,
            });
        }
    }
    best.ok_or_else(|| Error::Transform("no Box-Cox exponent gives a finite fit".into()))
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

impl BoxCoxFit {
    fn mean(&self, treated: bool, covariates: &[f64]) -> f64 {
        outcome_row(treated, covariates, self.interactions)
            .iter()
            .zip(&self.regression_coefficients)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Back-transform from the Box–Cox scale to the outcome scale.
    fn inverse(&self, z: f64) -> Result<f64> {
        let lambda = self.bc_exponent;
        let y = if lambda == 0.0 {
            z.exp()
        } else {
            let base = 1.0 + lambda * z;
            if base <= 0.0 {
                if lambda > 0.0 {
                    0.0
                } else {
                    return Err(Error::Transform(format!(
                        "quantile {z} lies beyond the range of the inverse transform"
                    )));
                }
            } else {
                base.powf(1.0 / lambda)
            }
        };
        if !y.is_finite() {
            return Err(Error::Transform("back-transformed quantile overflows".into()));
        }
        Ok(y - self.shift)
    }

    /// `q` with `n⁻¹ Σ_i Φ((z − μ_i)/σ) = p` on the transformed scale,
    /// mapped back to outcomes. For λ < 0 the transformed scale is bounded
    /// above by −1/λ and each unit's normal law is truncated there.
    fn mixture_quantile(&self, means: &[f64], p: f64) -> Result<f64> {
        let sd = self.residual_sd;
        let upper = (self.bc_exponent < 0.0).then(|| -1.0 / self.bc_exponent);
        let mass: Vec<f64> = match upper {
            Some(b) => means.iter().map(|m| std_normal_cdf((b - m) / sd)).collect(),
            None => vec![1.0; means.len()],
        };
        if mass.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Transform(
                "a fitted mean lies far beyond the range of the inverse transform".into(),
            ));
        }
        let f = |z: f64| {
            means.iter().zip(&mass).map(|(m, w)| std_normal_cdf((z - m) / sd) / w).sum::<f64>() / means.len() as f64
                - p
        };
        let lo_m = means.iter().copied().fold(f64::INFINITY, f64::min);
        let hi_m = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let hi = match upper {
            Some(b) => b,
            None => {
                let mut hi = hi_m + 10.0 * sd;
                while f(hi) < 0.0 {
                    hi += 10.0 * sd;
                }
                hi
            }
        };
        let mut lo = (lo_m - 10.0 * sd).min(hi - sd);
        while f(lo) > 0.0 {
            lo -= 10.0 * sd;
        }
        let tol = 1e-13 * (1.0 + lo.abs().max(hi.abs()));
        let z = brent_root(f, lo, hi, tol)
            .ok_or_else(|| Error::NonConvergence("normal mixture inversion failed".into()))?;
        self.inverse(z)
    }
}

/// Outcome-regression estimator: the fitted conditional normal law on the
/// Box–Cox scale is averaged over units (all for QTE, treated for QTT) and
/// inverted.
pub fn or_boxcox_effects(
    data: &Dataset,
    p_list: &[f64],
    estimand: Estimand,
    interactions: bool,
) -> Result<Vec<EffectEstimate>> {
    data.require_both_arms()?;
    let fit = fit_box_cox(data, interactions)?;
    or_effects_from_fit(&fit, data, p_list, estimand)
}

pub fn or_effects_from_fit(
    fit: &BoxCoxFit,
    data: &Dataset,
    p_list: &[f64],
    estimand: Estimand,
) -> Result<Vec<EffectEstimate>> {
    let units: Vec<&[f64]> = data
        .records()
        .iter()
        .filter(|r| estimand == Estimand::Qte || r.treated)
        .map(|r| r.covariates.as_slice())
        .collect();
    if units.is_empty() {
        return Err(Error::EstimandUndefined("no treated units".into()));
    }
    let m1: Vec<f64> = units.iter().map(|x| fit.mean(true, x)).collect();
    let m0: Vec<f64> = units.iter().map(|x| fit.mean(false, x)).collect();
    p_list
        .iter()
        .map(|&p| {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidArgument(format!("probability {p} outside (0, 1)")));
            }
            Ok(EffectEstimate::new(
                p,
                estimand,
                fit.mixture_quantile(&m1, p)?,
                fit.mixture_quantile(&m0, p)?,
            ))
        })
        .collect()
}

/// Empirical `p`-quantile (inverse of the unweighted ECDF).
pub fn empirical_quantile(values: &[f64], p: f64) -> Result<f64> {
    let cdf = StepCdf::from_weighted(values.iter().map(|&v| (v, 1.0)).collect())?;
    invert_cdf(&cdf, p)
}
