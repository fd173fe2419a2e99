//! Generalized Pareto tail: distribution function, tail quantiles,
//! maximum likelihood and the Anderson–Darling goodness-of-fit test.

use rand::distr::Open01;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng;

/// Below this |ξ| the exponential limit is used.
pub const XI_ZERO: f64 = 1e-8;
pub const XI_MIN: f64 = -0.5;
pub const XI_MAX: f64 = 2.0;
/// Smallest tail sample accepted by [`fit_gpd_mle`].
pub const MIN_EXCEEDANCES: usize = 10;
/// Default parametric-bootstrap replicates for [`ad_pvalue`].
pub const DEFAULT_AD_REPLICATES: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GpdParams {
    pub sigma: f64,
    pub xi: f64,
}

impl GpdParams {
    pub fn new(sigma: f64, xi: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("GPD scale must be positive, got {sigma}")));
        }
        if !(xi > XI_MIN && xi <= XI_MAX) {
            return Err(Error::InvalidArgument(format!(
                "GPD shape must lie in ({XI_MIN}, {XI_MAX}], got {xi}"
            )));
        }
        Ok(Self { sigma, xi })
    }

    /// Quantile of the excess distribution (threshold 0).
    pub fn excess_quantile(&self, q: f64) -> f64 {
        let log_survival = (-q).ln_1p();
        if self.xi.abs() <= XI_ZERO {
            -self.sigma * log_survival
        } else {
            self.sigma * (-self.xi * log_survival).exp_m1() / self.xi
        }
    }

    /// Upper end of the support above the threshold (infinite for ξ ≥ 0).
    pub fn upper_endpoint(&self) -> f64 {
        if self.xi < -XI_ZERO {
            -self.sigma / self.xi
        } else {
            f64::INFINITY
        }
    }
}

/// GPD fitted to the pooled excesses over a covariate-dependent threshold
/// `w_iᵀα̂(τ_u)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GpdTailFit {
    pub threshold_coefficients: Vec<f64>,
    pub params: GpdParams,
    /// Fraction of units above their threshold.
    pub exceedance_rate: f64,
    pub n_exceedances: usize,
}

/// `H(y) = 1 − [1 + ξ(y − u)/σ]^{−1/ξ}` (exponential limit near ξ = 0).
/// Values above the upper endpoint (ξ < 0) map to 1.
pub fn gpd_cdf(y: f64, u: f64, params: GpdParams) -> Result<f64> {
    if !(y >= u) {
        return Err(Error::Domain(format!("{y} is below the threshold {u}")));
    }
    Ok(excess_cdf(y - u, params))
}

fn excess_cdf(x: f64, params: GpdParams) -> f64 {
    let t = x / params.sigma;
    if params.xi.abs() <= XI_ZERO {
        return -(-t).exp_m1();
    }
    let base = params.xi * t;
    if base <= -1.0 {
        return 1.0;
    }
    -(-base.ln_1p() / params.xi).exp_m1()
}

/// Tail quantile `u* + (σ/ξ)[(ζ/(1−τ))^ξ − 1]`, or `u* + σ log(ζ/(1−τ))` near
/// ξ = 0. Requires `1 − τ < ζ`: shallower levels belong to the bulk model.
pub fn gpd_tail_quantile(tau: f64, u_star: f64, params: GpdParams, zeta: f64) -> Result<f64> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(Error::Domain(format!("exceedance rate {zeta} outside (0, 1)")));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Domain(format!("level {tau} outside (0, 1)")));
    }
    let depth = 1.0 - tau;
    if depth > zeta {
        return Err(Error::Domain(format!(
            "level {tau} is not inside the tail (1 - tau = {depth} > zeta = {zeta})"
        )));
    }
    let log_ratio = (zeta / depth).ln();
    let excess = if params.xi.abs() <= XI_ZERO {
        params.sigma * log_ratio
    } else {
        params.sigma * (params.xi * log_ratio).exp_m1() / params.xi
    };
    Ok(u_star + excess)
}

/// GPD log-likelihood of excesses over the threshold; `-∞` outside the support.
pub fn gpd_log_likelihood(excesses: &[f64], params: GpdParams) -> f64 {
    let GpdParams { sigma, xi } = params;
    let n = excesses.len() as f64;
    let mut acc = -n * sigma.ln();
    for &y in excesses {
        let t = y / sigma;
        if xi.abs() <= XI_ZERO {
            acc -= t;
        } else {
            let a = xi * t;
            if a <= -1.0 {
                return f64::NEG_INFINITY;
            }
            acc -= (1.0 + 1.0 / xi) * a.ln_1p();
        }
    }
    acc
}

/// Gradient of [`gpd_log_likelihood`] with respect to `(σ, ξ)`.
pub fn gpd_score(excesses: &[f64], params: GpdParams) -> [f64; 2] {
    let GpdParams { sigma, xi } = params;
    let n = excesses.len() as f64;
    let mut s1 = 0.0;
    let mut logs = 0.0;
    let mut lin = 0.0;
    let mut quad = 0.0;
    for &y in excesses {
        let t = y / sigma;
        let a = 1.0 + xi * t;
        s1 += t / a;
        logs += (xi * t).ln_1p();
        lin += t;
        quad += t * t;
    }
    let d_sigma = (-n + (1.0 + xi) * s1) / sigma;
    let d_xi = if xi.abs() < 1e-6 {
        quad / 2.0 - lin
    } else {
        logs / (xi * xi) - (1.0 + 1.0 / xi) * s1
    };
    [d_sigma, d_xi]
}

/// Maximum likelihood fit of `(σ, ξ)` with ξ restricted to (−0.5, 2].
///
/// Uses the profile likelihood in `θ = ξ/σ`: for fixed θ the maximizing
/// shape is `ξ(θ) = mean log(1 + θ y)`, so the fit reduces to a
/// one-dimensional root search on the profile score.
pub fn fit_gpd_mle(excesses: &[f64]) -> Result<GpdParams> {
    if excesses.len() < MIN_EXCEEDANCES {
        return Err(Error::InsufficientTail {
            found: excesses.len(),
            required: MIN_EXCEEDANCES,
        });
    }
    if let Some(bad) = excesses.iter().find(|&&y| !(y > 0.0 && y.is_finite())) {
        return Err(Error::InvalidArgument(format!("exceedance {bad} is not a positive finite number")));
    }
    let first = excesses[0];
    if excesses.iter().all(|&y| y == first) {
        return Err(Error::DegenerateTail);
    }
    let mean = excesses.iter().sum::<f64>() / excesses.len() as f64;
    let ys: Vec<f64> = excesses.iter().map(|y| y / mean).collect();
    let ymax = ys.iter().copied().fold(f64::MIN, f64::max);
    let profile = Profile { ys: &ys };

    // ξ(θ) is increasing; bracket the admissible θ range.
    let theta_dom = -1.0 / ymax;
    let lower_target = XI_MIN + 1e-9;
    let theta_lo = brent_root(
        |t| profile.eval(t).xi - lower_target,
        theta_dom * (1.0 - 1e-15),
        0.0,
        1e-15,
    )
    .unwrap_or(theta_dom * (1.0 - 1e-12));
    let mut hi = 1.0;
    while profile.eval(hi).xi < XI_MAX {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::NonConvergence("could not bracket the GPD shape".into()));
        }
    }
    let theta_hi = brent_root(|t| profile.eval(t).xi - XI_MAX, 0.0, hi, 1e-15).unwrap_or(hi);

    // Coarse scan for sign changes of the profile score, then refine the best
    // local maximum.
    let mut grid: Vec<f64> = (0..4).map(|k| theta_lo * (1.0 - k as f64 / 4.0)).collect();
    grid.push(0.0);
    grid.extend((0..=14).rev().map(|k| theta_hi * 0.5f64.powi(k)));
    let scores: Vec<f64> = grid.iter().map(|&t| profile.eval(t).score).collect();
    let mut candidates = vec![theta_lo, theta_hi];
    for k in 0..grid.len() - 1 {
        if scores[k] > 0.0 && scores[k + 1] <= 0.0 {
            let root = brent_root(|t| profile.eval(t).score, grid[k], grid[k + 1], 1e-15)
                .unwrap_or(grid[k + 1]);
            candidates.push(root);
        }
    }
    let best = candidates
        .into_iter()
        .map(|t| (t, profile.eval(t)))
        .filter(|(_, e)| e.loglik.is_finite())
        .max_by(|a, b| a.1.loglik.total_cmp(&b.1.loglik))
        .ok_or_else(|| Error::NonConvergence("profile likelihood is not finite".into()))?;
    let e = best.1;
    let xi = e.xi.clamp(XI_MIN + 1e-9, XI_MAX);
    GpdParams::new(e.sigma * mean, xi)
}

struct Profile<'a> {
    ys: &'a [f64],
}

#[derive(Debug, Clone, Copy)]
struct ProfileEval {
    xi: f64,
    sigma: f64,
    score: f64,
    loglik: f64,
}

impl Profile<'_> {
    fn eval(&self, theta: f64) -> ProfileEval {
        let n = self.ys.len() as f64;
        let mut xi = 0.0;
        let mut sigma = 0.0;
        let mut dxi = 0.0;
        let mut dsigma = 0.0;
        for &y in self.ys {
            let u = theta * y;
            if u <= -1.0 {
                return ProfileEval {
                    xi: f64::NEG_INFINITY,
                    sigma: f64::NAN,
                    score: f64::NAN,
                    loglik: f64::NEG_INFINITY,
                };
            }
            let l = u.ln_1p();
            xi += l;
            dxi += y / (1.0 + u);
            if u.abs() < 1e-3 {
                // log(1+u)/u and (u/(1+u) − log(1+u))/u² by series.
                sigma += y * (1.0 - u / 2.0 + u * u / 3.0 - u * u * u / 4.0);
                dsigma += y * y * (-0.5 + 2.0 * u / 3.0 - 0.75 * u * u + 0.8 * u * u * u);
            } else {
                sigma += y * l / u;
                dsigma += y * y * (u / (1.0 + u) - l) / (u * u);
            }
        }
        xi /= n;
        sigma /= n;
        dxi /= n;
        dsigma /= n;
        ProfileEval {
            xi,
            sigma,
            score: -(dsigma / sigma + dxi),
            loglik: -n * sigma.ln() - n * xi - n,
        }
    }
}

/// Brent's root finder on `[a, b]`; `None` if the endpoints do not bracket a
/// sign change.
pub(crate) fn brent_root(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Option<f64> {
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    if !fa.is_finite() || !fb.is_finite() {
        return None;
    }
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Some(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
        if !fb.is_finite() {
            return None;
        }
    }
    Some(b)
}

/// Anderson–Darling statistic of probability-integral-transformed values
/// (any order; they are sorted here). Values are clamped to
/// `[1e-12, 1 − 1e-12]` before taking logarithms.
pub fn ad_statistic_from_uniforms(z: &[f64]) -> f64 {
    let mut z: Vec<f64> = z.iter().map(|v| v.clamp(1e-12, 1.0 - 1e-12)).collect();
    z.sort_by(f64::total_cmp);
    let n = z.len();
    let nf = n as f64;
    let mut s = 0.0;
    for i in 0..n {
        let weight = (2 * i + 1) as f64;
        s += weight * (z[i].ln() + (-z[n - 1 - i]).ln_1p());
    }
    -nf - s / nf
}

/// Anderson–Darling statistic of excesses (threshold 0) under `params`.
pub fn ad_statistic(excesses: &[f64], params: GpdParams) -> f64 {
    let z: Vec<f64> = excesses.iter().map(|&y| excess_cdf(y.max(0.0), params)).collect();
    ad_statistic_from_uniforms(&z)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_boot: usize,
    pub n_failed: usize,
    pub params: GpdParams,
}

/// Parametric-bootstrap p-value of the Anderson–Darling test for a GPD fitted
/// by maximum likelihood: `(1 + #{A²_b ≥ A²_obs}) / (B + 1)` over the
/// successful replicates. Replicate `b` draws from stream `(seed, b)`.
pub fn ad_pvalue(excesses: &[f64], n_boot: usize, seed: u64) -> Result<AdTestResult> {
    if n_boot < 99 {
        return Err(Error::InvalidArgument(format!(
            "at least 99 bootstrap replicates required, got {n_boot}"
        )));
    }
    let params = fit_gpd_mle(excesses)?;
    let observed = ad_statistic(excesses, params);
    let n = excesses.len();
    let replicates: Vec<Option<f64>> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, b as u64);
            let sample: Vec<f64> = (0..n)
                .map(|_| params.excess_quantile(rng.sample::<f64, _>(Open01)))
                .collect();
            fit_gpd_mle(&sample)
                .ok()
                .map(|fitted| ad_statistic(&sample, fitted))
        })
        .collect();
    let n_failed = replicates.iter().filter(|r| r.is_none()).count();
    if n_failed * 10 > n_boot {
        return Err(Error::ReplicateFailures {
            failed: n_failed,
            total: n_boot,
            dominant: "gpd refit".into(),
        });
    }
    let succeeded = n_boot - n_failed;
    let exceed = replicates.iter().flatten().filter(|&&a| a >= observed).count();
    Ok(AdTestResult {
        statistic: observed,
        p_value: (1 + exceed) as f64 / (succeeded + 1) as f64,
        n_boot,
        n_failed,
        params,
    })
}

/// Draws `n` excesses from a GPD.
pub fn sample_excesses<R: Rng>(params: GpdParams, n: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| params.excess_quantile(rng.sample::<f64, _>(Open01)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(sigma: f64, xi: f64) -> GpdParams {
        GpdParams::new(sigma, xi).unwrap()
    }

    #[test]
    fn cdf_fixtures() {
        assert_eq!(gpd_cdf(3.0, 3.0, p(2.0, 0.4)).unwrap(), 0.0);
        assert!((gpd_cdf(1.0, 0.0, p(1.0, 0.0)).unwrap() - 0.632_120_558_828_557_7).abs() < 1e-15);
        assert!((gpd_cdf(1.0, 0.0, p(1.0, 1.0)).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(gpd_cdf(-0.1, 0.0, p(1.0, 1.0)), Err(Error::Domain(_))));
        // Beyond the upper endpoint u − σ/ξ = 2.5 for ξ = −0.4.
        assert_eq!(gpd_cdf(3.0, 0.0, p(1.0, -0.4)).unwrap(), 1.0);
    }

    #[test]
    fn cdf_is_continuous_across_exponential_switch() {
        for y in [0.1, 1.0, 5.0] {
            let a = gpd_cdf(y, 0.0, p(1.3, 0.0)).unwrap();
            let b = gpd_cdf(y, 0.0, p(1.3, 1.01e-8)).unwrap();
            let c = gpd_cdf(y, 0.0, p(1.3, -1.01e-8)).unwrap();
            assert!((a - b).abs() < 1e-6 && (a - c).abs() < 1e-6);
        }
    }

    #[test]
    fn tail_quantile_fixtures() {
        assert_eq!(gpd_tail_quantile(0.9, 4.0, p(1.0, 0.3), 0.1).unwrap(), 4.0);
        assert!((gpd_tail_quantile(0.95, 0.0, p(1.0, 1.0), 0.1).unwrap() - 1.0).abs() < 1e-12);
        assert!(
            (gpd_tail_quantile(0.99, 0.0, p(1.0, 0.0), 0.1).unwrap() - 10f64.ln()).abs() < 1e-12
        );
        assert!(matches!(
            gpd_tail_quantile(0.85, 0.0, p(1.0, 0.2), 0.1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn tail_quantile_inverts_cdf() {
        let params = p(2.5, 0.35);
        let zeta = 0.12;
        for tau in [0.89, 0.9, 0.95, 0.99, 0.9995] {
            let q = gpd_tail_quantile(tau, 1.5, params, zeta).unwrap();
            let h = gpd_cdf(q, 1.5, params).unwrap();
            assert!((h - (1.0 - (1.0 - tau) / zeta)).abs() < 1e-9);
        }
    }

    #[test]
    fn ad_formula_fixture() {
        let a2 = ad_statistic_from_uniforms(&[0.1, 0.5, 0.9]);
        assert!((a2 - 0.272_553).abs() < 1e-5, "{a2}");
    }

    #[test]
    fn mle_requires_ten_exceedances() {
        assert_eq!(
            fit_gpd_mle(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap_err(),
            Error::InsufficientTail {
                found: 5,
                required: 10
            }
        );
        assert_eq!(fit_gpd_mle(&[2.0; 12]).unwrap_err(), Error::DegenerateTail);
    }

    #[test]
    fn score_vanishes_at_interior_mle() {
        let mut rng = rng::stream(11, 0);
        let data = sample_excesses(p(2.0, 0.3), 500, &mut rng);
        let fit = fit_gpd_mle(&data).unwrap();
        let [gs, gx] = gpd_score(&data, fit);
        assert!(gs.hypot(gx) < 1e-6, "score {gs} {gx}");
    }

    #[test]
    fn ad_pvalue_rejects_too_few_replicates() {
        assert!(matches!(ad_pvalue(&[1.0; 20], 10, 1), Err(Error::InvalidArgument(_))));
    }
}
