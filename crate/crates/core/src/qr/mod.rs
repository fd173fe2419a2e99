//! Linear quantile regression, single-level and simultaneous non-crossing.
//!
//! Both fits solve the exact check-loss linear program with an interior point
//! method; the relative duality gap at termination is reported in the fit.
//! Non-crossing is enforced at every observed design row, which by linearity
//! of the predictions also holds on the convex hull of the rows.

mod ipm;

use serde::Serialize;

use crate::data::{validate_levels, Dataset};
use crate::error::{Error, Result};
use crate::linalg;

/// Relative duality-gap tolerance certified for every returned fit.
pub const GAP_TOLERANCE: f64 = 1e-8;

/// Regression design, row-major `n × p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    n: usize,
    p: usize,
    values: Vec<f64>,
}

impl Design {
    pub fn new(n: usize, p: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::EmptyInput);
        }
        if values.len() != n * p {
            return Err(Error::DimensionMismatch {
                expected: n * p,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite design entry".into()));
        }
        Ok(Self { n, p, values })
    }

    /// Columns `(1, D, X_1, …, X_{m−1})`.
    pub fn from_dataset(data: &Dataset) -> Self {
        let p = 2 + data.n_covariates();
        let mut values = Vec::with_capacity(data.n() * p);
        for r in data.records() {
            values.push(1.0);
            values.push(r.treatment());
            values.extend_from_slice(&r.covariates);
        }
        Self {
            n: data.n(),
            p,
            values,
        }
    }

    /// Columns `(1, X_1, …)` without the treatment indicator.
    pub fn covariates_only(data: &Dataset) -> Self {
        let p = 1 + data.n_covariates();
        let mut values = Vec::with_capacity(data.n() * p);
        for r in data.records() {
            values.push(1.0);
            values.extend_from_slice(&r.covariates);
        }
        Self {
            n: data.n(),
            p,
            values,
        }
    }

    pub fn intercept_only(n: usize) -> Self {
        Self {
            n,
            p: 1,
            values: vec![1.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn is_intercept_only(&self) -> bool {
        self.p == 1 && self.values.iter().all(|&v| v == 1.0)
    }

    fn column_scales(&self) -> Vec<f64> {
        let mut s = vec![0.0f64; self.p];
        for i in 0..self.n {
            for (c, v) in s.iter_mut().zip(self.row(i)) {
                *c = c.max(v.abs());
            }
        }
        s
    }

    /// Errors with [`Error::SingularDesign`] unless the columns are linearly
    /// independent (after scaling each column to unit norm).
    pub fn check_full_rank(&self) -> Result<()> {
        if self.n < self.p {
            return Err(Error::SingularDesign);
        }
        let p = self.p;
        let mut norms = vec![0.0f64; p];
        for i in 0..self.n {
            for (c, v) in norms.iter_mut().zip(self.row(i)) {
                *c += v * v;
            }
        }
        if norms.iter().any(|&v| v == 0.0) {
            return Err(Error::SingularDesign);
        }
        let inv: Vec<f64> = norms.iter().map(|v| 1.0 / v.sqrt()).collect();
        let mut g = vec![0.0; p * p];
        for i in 0..self.n {
            let r = self.row(i);
            for a in 0..p {
                for b in 0..=a {
                    g[a * p + b] += r[a] * inv[a] * r[b] * inv[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                g[b * p + a] = g[a * p + b];
            }
        }
        // Squared pivots are squared distances of each unit column from the
        // span of the preceding ones.
        let mut l = g;
        if !linalg::cholesky_in_place(&mut l, p) {
            return Err(Error::SingularDesign);
        }
        if (0..p).any(|j| l[j * p + j] * l[j * p + j] < 1e-10) {
            return Err(Error::SingularDesign);
        }
        Ok(())
    }
}

/// `ρ_τ(r) = r (τ − 1{r < 0})`.
pub fn check_loss(r: f64, tau: f64) -> f64 {
    r * (tau - if r < 0.0 { 1.0 } else { 0.0 })
}

/// Summed check loss of `beta` at level `tau`.
pub fn objective(design: &Design, y: &[f64], tau: f64, beta: &[f64]) -> f64 {
    (0..design.n())
        .map(|i| check_loss(y[i] - dot(design.row(i), beta), tau))
        .sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// A single-level fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleFit {
    pub level: f64,
    pub coefficients: Vec<f64>,
    pub objective_value: f64,
    pub duality_gap: f64,
}

/// Coefficients for an increasing list of levels; row `j` belongs to
/// `levels[j]`. For designs built by [`Design::from_dataset`], column 0 is the
/// intercept, column 1 the treatment and the rest the covariates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileFit {
    pub levels: Vec<f64>,
    pub coefficients: Vec<Vec<f64>>,
    pub objective_value: f64,
    pub duality_gap: f64,
}

impl QuantileFit {
    /// Affine prediction `wᵀβ(τ_j)` for every level.
    pub fn predict_row(&self, w: &[f64]) -> Result<Vec<f64>> {
        let p = self.coefficients.first().map_or(0, Vec::len);
        if w.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: w.len(),
            });
        }
        Ok(self.coefficients.iter().map(|b| dot(w, b)).collect())
    }

    /// `β̂_0(τ) + t β̂_1(τ) + xᵀβ̂*(τ)` for every level.
    pub fn predict_quantiles(&self, treated: bool, covariates: &[f64]) -> Result<Vec<f64>> {
        let mut w = Vec::with_capacity(covariates.len() + 2);
        w.push(1.0);
        w.push(if treated { 1.0 } else { 0.0 });
        w.extend_from_slice(covariates);
        self.predict_row(&w)
    }

    /// Largest violation of `wᵀβ(τ_{j+1}) ≥ wᵀβ(τ_j)` over the rows of `design`
    /// (zero when the predicate holds).
    pub fn max_crossing(&self, design: &Design) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..design.n() {
            let w = design.row(i);
            for pair in self.coefficients.windows(2) {
                worst = worst.max(dot(w, &pair[0]) - dot(w, &pair[1]));
            }
        }
        worst
    }
}

/// Single-level linear quantile regression on an explicit design.
pub fn fit_single(design: &Design, y: &[f64], tau: f64) -> Result<SingleFit> {
    validate_levels(&[tau])?;
    check_inputs(design, y)?;
    let (mut beta, gap) = solve_stacked(design, y, &[tau], false)?;
    let beta_ipm = beta[0].clone();
    let obj_ipm = objective(design, y, tau, &beta_ipm);
    let mut chosen = beta_ipm;
    let mut obj = obj_ipm;
    if let Some(vertex) = vertex_solution(design, y, &chosen) {
        let obj_v = objective(design, y, tau, &vertex);
        if obj_v <= obj_ipm + 1e-12 * (1.0 + obj_ipm.abs()) {
            chosen = vertex;
            obj = obj_v;
        }
    }
    if design.is_intercept_only() {
        // Lower endpoint of the minimizer interval: the inverse-ECDF quantile.
        let mut sorted = y.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let k = (1..=n).find(|&k| k as f64 / n as f64 >= tau).unwrap_or(n);
        chosen = vec![sorted[k - 1]];
        obj = objective(design, y, tau, &chosen);
    }
    beta.clear();
    Ok(SingleFit {
        level: tau,
        coefficients: chosen,
        objective_value: obj,
        duality_gap: gap,
    })
}

/// Single-level fit on the `(1, D, X)` design of a dataset.
pub fn fit_single_qr(data: &Dataset, tau: f64) -> Result<SingleFit> {
    fit_single(&Design::from_dataset(data), &data.outcomes(), tau)
}

/// Jointly minimizes the summed check losses over `levels` subject to
/// non-crossing at every design row.
pub fn fit_noncrossing(design: &Design, y: &[f64], levels: &[f64]) -> Result<QuantileFit> {
    validate_levels(levels)?;
    check_inputs(design, y)?;
    if levels.len() == 1 {
        let single = fit_single(design, y, levels[0])?;
        return Ok(QuantileFit {
            levels: levels.to_vec(),
            coefficients: vec![single.coefficients],
            objective_value: single.objective_value,
            duality_gap: single.duality_gap,
        });
    }
    let (coefficients, gap) = solve_stacked(design, y, levels, true)?;
    let objective_value = levels
        .iter()
        .zip(&coefficients)
        .map(|(&t, b)| objective(design, y, t, b))
        .sum();
    Ok(QuantileFit {
        levels: levels.to_vec(),
        coefficients,
        objective_value,
        duality_gap: gap,
    })
}

/// Non-crossing fit on the `(1, D, X)` design of a dataset.
pub fn fit_noncrossing_qr(data: &Dataset, levels: &[f64]) -> Result<QuantileFit> {
    fit_noncrossing(&Design::from_dataset(data), &data.outcomes(), levels)
}

fn check_inputs(design: &Design, y: &[f64]) -> Result<()> {
    if y.len() != design.n() {
        return Err(Error::DimensionMismatch {
            expected: design.n(),
            found: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite response".into()));
    }
    design.check_full_rank()
}

/// Runs the interior point solver on scaled data and maps the solution back.
fn solve_stacked(
    design: &Design,
    y: &[f64],
    levels: &[f64],
    noncrossing: bool,
) -> Result<(Vec<Vec<f64>>, f64)> {
    let n = design.n();
    let p = design.p();
    let col_scale = design.column_scales();
    let y_scale = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let y_scale = if y_scale > 0.0 { y_scale } else { 1.0 };
    let xs: Vec<f64> = design
        .values()
        .chunks(p)
        .flat_map(|r| r.iter().zip(&col_scale).map(|(v, s)| v / s).collect::<Vec<_>>())
        .collect();
    let ys: Vec<f64> = y.iter().map(|v| v / y_scale).collect();

    // Start from least squares with the intercept shifted to each level's
    // residual quantile; this start never crosses.
    let ols = linalg::least_squares(&xs, n, p, &ys).ok_or(Error::SingularDesign)?;
    let mut resid: Vec<f64> = (0..n)
        .map(|i| ys[i] - dot(&xs[i * p..(i + 1) * p], &ols))
        .collect();
    resid.sort_by(f64::total_cmp);
    let intercept_col = (0..p).find(|&c| (0..n).all(|i| design.row(i)[c] == design.row(0)[c]));
    let mut start = Vec::with_capacity(levels.len() * p);
    for &t in levels {
        let mut b = ols.clone();
        if let Some(c) = intercept_col {
            let k = ((t * n as f64).ceil() as usize).clamp(1, n) - 1;
            b[c] += resid[k] / (xs[c]);
        }
        start.extend(b);
    }

    // Active-set loop: solve with the constraints found violated so far,
    // add every crossing pair, warm-start, and repeat until none remain.
    // Intermediate rounds stop at a loose tolerance; the last is polished.
    let prob = ipm::Problem {
        x: &xs,
        n,
        p,
        y: &ys,
        taus: levels,
    };
    let mut state = prob.cold_state(start, Vec::new());
    let mut rounds = 0;
    let status = loop {
        let tol = if noncrossing { ROUND_TOL } else { IPM_TOL };
        let status = prob.iterate(&mut state, tol, MAX_ITER);
        if !status.converged {
            return Err(Error::SolverFailure {
                iterations: status.iterations,
                gap: status.gap,
            });
        }
        if !noncrossing {
            break status;
        }
        let mut cons = state.cons.clone();
        let added = add_violations(&xs, n, p, levels.len(), &state.beta, &mut cons);
        rounds += 1;
        if added == 0 {
            let status = prob.iterate(&mut state, IPM_TOL, MAX_ITER);
            if !status.converged && !(status.gap <= GAP_TOLERANCE) {
                return Err(Error::SolverFailure {
                    iterations: status.iterations,
                    gap: status.gap,
                });
            }
            break status;
        }
        if rounds >= MAX_ACTIVE_SET_ROUNDS {
            return Err(Error::SolverFailure {
                iterations: status.iterations,
                gap: status.gap,
            });
        }
        state = prob.warm_state(&state, cons);
    };
    let outcome_beta = state.beta;
    let gap = status.gap;
    let coefficients = outcome_beta
        .chunks(p)
        .map(|b| {
            b.iter()
                .zip(&col_scale)
                .map(|(v, s)| v * y_scale / s)
                .collect()
        })
        .collect();
    Ok((coefficients, gap))
}

const MAX_ACTIVE_SET_ROUNDS: usize = 50;
const MAX_ITER: usize = 200;
const IPM_TOL: f64 = 1e-11;
const ROUND_TOL: f64 = 1e-6;
/// Crossing tolerated before a pair enters the active set (scaled units).
const CROSSING_SLACK: f64 = 1e-12;

/// Appends every `(j, i)` with `x_iᵀβ_j > x_iᵀβ_{j+1}` not yet present.
fn add_violations(
    xs: &[f64],
    n: usize,
    p: usize,
    nl: usize,
    beta: &[f64],
    constraints: &mut Vec<(usize, usize)>,
) -> usize {
    let mut present: std::collections::HashSet<(usize, usize)> = constraints.iter().copied().collect();
    let mut added = 0;
    for i in 0..n {
        let r = &xs[i * p..(i + 1) * p];
        let mut prev = dot(r, &beta[..p]);
        for j in 0..nl - 1 {
            let next = dot(r, &beta[(j + 1) * p..(j + 2) * p]);
            if prev - next > CROSSING_SLACK && present.insert((j, i)) {
                constraints.push((j, i));
                added += 1;
            }
            prev = next;
        }
    }
    constraints.sort_unstable();
    added
}

/// Basic solution through the `p` rows with the smallest absolute residuals
/// that form a nonsingular system.
fn vertex_solution(design: &Design, y: &[f64], beta: &[f64]) -> Option<Vec<f64>> {
    let p = design.p();
    let mut order: Vec<usize> = (0..design.n()).collect();
    let resid: Vec<f64> = (0..design.n())
        .map(|i| (y[i] - dot(design.row(i), beta)).abs())
        .collect();
    order.sort_by(|&a, &b| resid[a].total_cmp(&resid[b]).then(a.cmp(&b)));
    // Greedy selection of independent rows by Gram-Schmidt.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut picked = Vec::with_capacity(p);
    for &i in &order {
        let r = design.row(i);
        let norm0 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            continue;
        }
        let mut v: Vec<f64> = r.iter().map(|x| x / norm0).collect();
        for b in &basis {
            let proj = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
            picked.push(i);
            if picked.len() == p {
                break;
            }
        }
    }
    if picked.len() < p {
        return None;
    }
    let a: Vec<f64> = picked.iter().flat_map(|&i| design.row(i).to_vec()).collect();
    let b: Vec<f64> = picked.iter().map(|&i| y[i]).collect();
    linalg::lu_solve(&a, p, &b, 1e-12)
}
