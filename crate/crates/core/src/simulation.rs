//! Simulation design, Monte Carlo truths and the comparison study harness.
//!
//! Covariates: `X1 ~ N(15, sd 6)`, `X2 ~ Exp(mean 2)`, `X3 ~ N(1, 1)`.
//! Treatment: `logit π = −3 + 0.1 X1 + 0.1 X2 + 0.2 X3`.
//! Outcome: `Y = 10 + 15D + X1 + 3X2 + 2X1·D + (1 + 4X2 + 3D) ε`, with one
//! `ε` per unit shared by both potential outcomes.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Cauchy, Distribution, Exp, Normal, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::counterfactual::Estimand;
use crate::data::{Dataset, ObservedRecord};
use crate::error::{Error, Result};
use crate::methods::{estimate, EstimatorConfig, Method};
use crate::rng;

pub const MIN_DGP_N: usize = 50;
pub const MIN_ORACLE_DRAWS: usize = 1_000_000;
pub const MIN_STUDY_REPLICATES: usize = 50;
/// Share of failed replicates above which a method is reported as failed.
pub const MAX_FAILURE_SHARE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ErrorKind {
    /// `ε ~ N(0, sd 10)`.
    #[serde(rename = "gaussian")]
    GaussianSd10,
    /// Student-t with one degree of freedom (standard Cauchy).
    #[serde(rename = "t1")]
    StudentTDf1,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::GaussianSd10 => "gaussian",
            ErrorKind::StudentTDf1 => "t1",
        })
    }
}

impl FromStr for ErrorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(ErrorKind::GaussianSd10),
            "t1" | "t" | "cauchy" => Ok(ErrorKind::StudentTDf1),
            other => Err(Error::InvalidArgument(format!(
                "unknown error distribution {other:?} (expected gaussian or t1)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DgpConfig {
    pub n: usize,
    pub error_kind: ErrorKind,
    pub seed: u64,
}

/// One simulated unit with both potential outcomes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unit {
    pub x: [f64; 3],
    pub propensity: f64,
    pub treated: bool,
    pub y0: f64,
    pub y1: f64,
}

impl Unit {
    pub fn observed(&self) -> f64 {
        if self.treated {
            self.y1
        } else {
            self.y0
        }
    }
}

pub fn propensity(x: &[f64; 3]) -> f64 {
    let eta = -3.0 + 0.1 * x[0] + 0.1 * x[1] + 0.2 * x[2];
    1.0 / (1.0 + (-eta).exp())
}

pub fn potential_outcome(x: &[f64; 3], t: f64, eps: f64) -> f64 {
    10.0 + 15.0 * t + x[0] + 3.0 * x[1] + 2.0 * x[0] * t + (1.0 + 4.0 * x[1] + 3.0 * t) * eps
}

fn draw_error<R: Rng>(kind: ErrorKind, rng: &mut R) -> f64 {
    match kind {
        ErrorKind::GaussianSd10 => 10.0 * rng.sample::<f64, _>(StandardNormal),
        ErrorKind::StudentTDf1 => Cauchy::new(0.0, 1.0).expect("valid scale").sample(rng),
    }
}

/// Draws one unit: `X1, X2, X3`, the treatment uniform, then `ε`.
pub fn draw_unit<R: Rng>(kind: ErrorKind, rng: &mut R) -> Unit {
    let x1 = Normal::new(15.0, 6.0).expect("valid sd").sample(rng);
    let x2 = Exp::new(0.5).expect("valid rate").sample(rng);
    let x3 = 1.0 + rng.sample::<f64, _>(StandardNormal);
    let x = [x1, x2, x3];
    let pi = propensity(&x);
    let treated = rng.random::<f64>() < pi;
    let eps = draw_error(kind, rng);
    Unit {
        x,
        propensity: pi,
        treated,
        y0: potential_outcome(&x, 0.0, eps),
        y1: potential_outcome(&x, 1.0, eps),
    }
}

pub fn generate_units(config: DgpConfig) -> Result<Vec<Unit>> {
    if config.n < MIN_DGP_N {
        return Err(Error::InvalidArgument(format!(
            "simulated sample size must be at least {MIN_DGP_N}, got {}",
            config.n
        )));
    }
    let mut rng = rng::stream(config.seed, 0);
    Ok((0..config.n).map(|_| draw_unit(config.error_kind, &mut rng)).collect())
}

/// Observed data `(Y, D, X1, X2, X3)` from the simulation design.
pub fn generate_dgp(config: DgpConfig) -> Result<Dataset> {
    let units = generate_units(config)?;
    Dataset::new(
        units
            .iter()
            .map(|u| ObservedRecord::new(u.observed(), u.treated, u.x.to_vec()))
            .collect::<Result<_>>()?,
        vec!["X1".into(), "X2".into(), "X3".into()],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrueEffect {
    pub p: f64,
    pub qte: f64,
    pub qtt: f64,
}

impl TrueEffect {
    pub fn get(&self, estimand: Estimand) -> f64 {
        match estimand {
            Estimand::Qte => self.qte,
            Estimand::Qtt => self.qtt,
        }
    }
}

const ORACLE_CHUNK: usize = 1 << 16;

/// Inverse-ECDF quantile of sorted values.
fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let mut k = ((p * n as f64).ceil() as usize).clamp(1, n);
    while k > 1 && (k - 1) as f64 / n as f64 >= p {
        k -= 1;
    }
    while (k as f64 / n as f64) < p && k < n {
        k += 1;
    }
    sorted[k - 1]
}

/// Monte Carlo truths: empirical quantiles of `Y(1)` and `Y(0)` over `draws`
/// simulated units (QTE), and over the treated among them (QTT).
pub fn oracle_truths(p_list: &[f64], kind: ErrorKind, draws: usize, seed: u64) -> Result<Vec<TrueEffect>> {
    if draws < MIN_ORACLE_DRAWS {
        return Err(Error::InvalidArgument(format!(
            "oracle needs at least {MIN_ORACLE_DRAWS} draws, got {draws}"
        )));
    }
    if let Some(p) = p_list.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::InvalidArgument(format!("probability {p} outside (0, 1)")));
    }
    let chunks = draws.div_ceil(ORACLE_CHUNK);
    let units: Vec<Vec<Unit>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = ORACLE_CHUNK.min(draws - c * ORACLE_CHUNK);
            let mut r = rng::stream(seed, c as u64);
            (0..len).map(|_| draw_unit(kind, &mut r)).collect()
        })
        .collect();
    let collect = |f: &(dyn Fn(&Unit) -> Option<f64> + Sync)| -> Vec<f64> {
        let mut v: Vec<f64> = units.iter().flatten().filter_map(f).collect();
        v.par_sort_unstable_by(f64::total_cmp);
        v
    };
    let y1 = collect(&|u| Some(u.y1));
    let y0 = collect(&|u| Some(u.y0));
    let y1t = collect(&|u| u.treated.then_some(u.y1));
    let y0t = collect(&|u| u.treated.then_some(u.y0));
    if y1t.is_empty() {
        return Err(Error::EstimandUndefined("no treated units drawn".into()));
    }
    Ok(p_list
        .iter()
        .map(|&p| TrueEffect {
            p,
            qte: sorted_quantile(&y1, p) - sorted_quantile(&y0, p),
            qtt: sorted_quantile(&y1t, p) - sorted_quantile(&y0t, p),
        })
        .collect())
}

pub fn oracle_true_quantiles(p: f64, estimand: Estimand, kind: ErrorKind, draws: usize, seed: u64) -> Result<f64> {
    Ok(oracle_truths(&[p], kind, draws, seed)?[0].get(estimand))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyConfig {
    pub n_list: Vec<usize>,
    pub error_kinds: Vec<ErrorKind>,
    pub p_list: Vec<f64>,
    pub estimands: Vec<Estimand>,
    pub methods: Vec<Method>,
    pub n_replicates: usize,
    pub seed: u64,
    pub oracle_draws: usize,
    pub estimator: EstimatorConfig,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_replicates < MIN_STUDY_REPLICATES {
            return Err(Error::InvalidArgument(format!(
                "at least {MIN_STUDY_REPLICATES} replicates required, got {}",
                self.n_replicates
            )));
        }
        if self.n_list.is_empty() || self.error_kinds.is_empty() || self.methods.is_empty() {
            return Err(Error::InvalidArgument("empty study grid".into()));
        }
        if self.estimands.is_empty() || self.p_list.is_empty() {
            return Err(Error::InvalidArgument("no estimands or probability levels".into()));
        }
        if let Some(n) = self.n_list.iter().find(|&&n| n < MIN_DGP_N) {
            return Err(Error::InvalidArgument(format!("sample size {n} below {MIN_DGP_N}")));
        }
        if let Some(p) = self.p_list.iter().find(|&&p| !(p > 0.0 && p <= self.estimator.proposed.grid.tau_max)) {
            return Err(Error::InvalidArgument(format!("probability {p} outside (0, tau_max]")));
        }
        Ok(())
    }
}

/// Aggregates of one method in one cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub error_kind: ErrorKind,
    pub n: usize,
    pub estimand: Estimand,
    pub p: f64,
    pub method: Method,
    pub truth: f64,
    pub n_success: usize,
    pub n_failed: usize,
    pub failed: bool,
    pub mean_estimate: f64,
    pub relative_bias_pct: f64,
    pub variance: f64,
    pub mse: f64,
    /// Relative to the proposed method; absent without a proposed row.
    pub relative_variance: Option<f64>,
    pub relative_mse: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub relative_bias_pct: f64,
    pub variance: f64,
    pub mse: f64,
}

/// `RB = 100 (mean − truth)/truth`, sample variance (divisor `m − 1`) and
/// `MSE = mean (est − truth)²`. Estimates are summed in sorted order.
pub fn summarize_estimates(estimates: &[f64], truth: f64) -> MetricSummary {
    let mut v = estimates.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    let variance = if v.len() > 1 {
        v.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    let mse = v.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / m;
    MetricSummary {
        mean,
        relative_bias_pct: 100.0 * (mean - truth) / truth,
        variance,
        mse,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthRow {
    pub error_kind: ErrorKind,
    pub p: f64,
    pub qte: f64,
    pub qtt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub truths: Vec<TruthRow>,
    pub rows: Vec<StudyRow>,
    /// Most frequent failure per (error, n, method), when any.
    pub failure_notes: Vec<String>,
}

type CellKey = (Estimand, u64, Method);

fn p_key(p: f64) -> u64 {
    p.to_bits()
}

/// Runs every `(error kind, n)` cell: `n_replicates` simulated datasets,
/// each estimated by every method, aggregated against the oracle truth.
pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let mut truths = Vec::new();
    let mut rows = Vec::new();
    let mut failure_notes = Vec::new();
    for (ki, &kind) in config.error_kinds.iter().enumerate() {
        let truth = oracle_truths(
            &config.p_list,
            kind,
            config.oracle_draws,
            rng::child_seed(config.seed, 1_000_000 + ki as u64),
        )?;
        truths.extend(truth.iter().map(|t| TruthRow {
            error_kind: kind,
            p: t.p,
            qte: t.qte,
            qtt: t.qtt,
        }));
        for (ni, &n) in config.n_list.iter().enumerate() {
            let cell_seed = rng::child_seed(config.seed, (ki * config.n_list.len() + ni) as u64);
            let reps: Vec<Vec<(Method, std::result::Result<Vec<(CellKey, f64)>, Error>)>> = (0..config.n_replicates)
                .into_par_iter()
                .map(|r| {
                    let data_seed = rng::child_seed(cell_seed, r as u64);
                    let data = match generate_dgp(DgpConfig {
                        n,
                        error_kind: kind,
                        seed: data_seed,
                    }) {
                        Ok(d) => d,
                        Err(e) => return config.methods.iter().map(|&m| (m, Err(e.clone()))).collect(),
                    };
                    config
                        .methods
                        .par_iter()
                        .map(|&m| {
                            let out = estimate(
                                &data,
                                m,
                                &config.estimator,
                                &config.p_list,
                                &config.estimands,
                                rng::child_seed(data_seed, 1),
                            )
                            .map(|res| {
                                res.effects
                                    .iter()
                                    .map(|e| ((e.estimand, p_key(e.p), m), e.point))
                                    .collect()
                            });
                            (m, out)
                        })
                        .collect()
                })
                .collect();

            let mut values: BTreeMap<CellKey, Vec<f64>> = BTreeMap::new();
            let mut failures: BTreeMap<Method, BTreeMap<String, usize>> = BTreeMap::new();
            for rep in reps {
                for (m, out) in rep {
                    match out {
                        Ok(list) => {
                            for (k, v) in list {
                                values.entry(k).or_default().push(v);
                            }
                        }
                        Err(e) => *failures.entry(m).or_default().entry(e.kind().to_string()).or_default() += 1,
                    }
                }
            }
            for (m, kinds) in &failures {
                let total: usize = kinds.values().sum();
                let (dominant, count) = kinds.iter().max_by_key(|(_, c)| **c).expect("nonempty");
                failure_notes.push(format!(
                    "{kind} n={n} {}: {total} failed replicate(s), mostly {dominant} ({count})",
                    m.label()
                ));
            }

            for &estimand in &config.estimands {
                for (pi, &p) in config.p_list.iter().enumerate() {
                    let t = truth[pi].get(estimand);
                    let summaries: Vec<(Method, Vec<f64>, Option<MetricSummary>)> = config
                        .methods
                        .iter()
                        .map(|&m| {
                            let v = values.get(&(estimand, p_key(p), m)).cloned().unwrap_or_default();
                            let failed = config.n_replicates - v.len();
                            let ok = !v.is_empty() && (failed as f64) <= MAX_FAILURE_SHARE * config.n_replicates as f64;
                            let s = ok.then(|| summarize_estimates(&v, t));
                            (m, v, s)
                        })
                        .collect();
                    let reference = summaries
                        .iter()
                        .find(|(m, _, _)| *m == Method::Proposed)
                        .and_then(|(_, _, s)| *s);
                    for (m, v, s) in summaries {
                        let n_success = v.len();
                        let row = match s {
                            Some(s) => StudyRow {
                                error_kind: kind,
                                n,
                                estimand,
                                p,
                                method: m,
                                truth: t,
                                n_success,
                                n_failed: config.n_replicates - n_success,
                                failed: false,
                                mean_estimate: s.mean,
                                relative_bias_pct: s.relative_bias_pct,
                                variance: s.variance,
                                mse: s.mse,
                                relative_variance: reference.map(|r| s.variance / r.variance),
                                relative_mse: reference.map(|r| s.mse / r.mse),
                            },
                            None => StudyRow {
                                error_kind: kind,
                                n,
                                estimand,
                                p,
                                method: m,
                                truth: t,
                                n_success,
                                n_failed: config.n_replicates - n_success,
                                failed: true,
                                mean_estimate: f64::NAN,
                                relative_bias_pct: f64::NAN,
                                variance: f64::NAN,
                                mse: f64::NAN,
                                relative_variance: None,
                                relative_mse: None,
                            },
                        };
                        rows.push(row);
                    }
                }
            }
        }
    }
    Ok(StudyResult {
        config: config.clone(),
        truths,
        rows,
        failure_notes,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl StudyResult {
    pub fn row(&self, kind: ErrorKind, n: usize, estimand: Estimand, p: f64, method: Method) -> Option<&StudyRow> {
        self.rows.iter().find(|r| {
            r.error_kind == kind && r.n == n && r.estimand == estimand && r.p == p && r.method == method
        })
    }

    /// One CSV row per `(error, n, estimand, p, method)`.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record([
            "error", "n", "estimand", "p", "method", "truth", "estimate", "rb_pct", "variance", "mse", "rv",
            "rmse", "n_success", "n_failed", "failed",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.error_kind.to_string(),
                r.n.to_string(),
                r.estimand.to_string(),
                r.p.to_string(),
                r.method.to_string(),
                r.truth.to_string(),
                r.mean_estimate.to_string(),
                r.relative_bias_pct.to_string(),
                r.variance.to_string(),
                r.mse.to_string(),
                fmt_opt(r.relative_variance),
                fmt_opt(r.relative_mse),
                r.n_success.to_string(),
                r.n_failed.to_string(),
                r.failed.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::Internal(e.to_string()))?;
        Ok(())
    }

    /// Text tables laid out as Estimate / RB / RV / RMSE per sample size,
    /// one block per error distribution and estimand. The TMLE row is kept
    /// as an empty placeholder.
    pub fn to_table(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# design: X1 ~ N(15, sd 6); X2 ~ Exp(mean 2); X3 ~ N(1, 1); t1 error has unit scale; \
             one error draw shared by both potential outcomes"
        );
        let _ = writeln!(
            out,
            "# replicates: {}; oracle draws: {}; seed: {}",
            c.n_replicates, c.oracle_draws, c.seed
        );
        for &kind in &c.error_kinds {
            for &estimand in &c.estimands {
                let _ = writeln!(out, "\n{estimand}, {kind} errors");
                let mut header = format!("{:<8} {:<9}", "p", "Method");
                for n in &c.n_list {
                    header += &format!(
                        " | {:>12} {:>9} {:>12} {:>10}",
                        format!("Est(n={n})"),
                        "RB",
                        "RV",
                        "RMSE"
                    );
                }
                let _ = writeln!(out, "{header}");
                for &p in &c.p_list {
                    let truth = self
                        .truths
                        .iter()
                        .find(|t| t.error_kind == kind && t.p == p)
                        .map(|t| match estimand {
                            Estimand::Qte => t.qte,
                            Estimand::Qtt => t.qtt,
                        });
                    let mut labels: Vec<Option<Method>> = Vec::new();
                    for m in [Method::Or, Method::Ipw] {
                        if c.methods.contains(&m) {
                            labels.push(Some(m));
                        }
                    }
                    labels.push(None);
                    for m in [Method::Firpo, Method::Proposed] {
                        if c.methods.contains(&m) {
                            labels.push(Some(m));
                        }
                    }
                    for (li, label) in labels.iter().enumerate() {
                        let p_col = if li == 0 { format!("{p}") } else { String::new() };
                        let name = label.map(|m| m.label()).unwrap_or("TMLE");
                        let mut line = format!("{p_col:<8} {name:<9}");
                        for &n in &c.n_list {
                            match label.and_then(|m| self.row(kind, n, estimand, p, m)) {
                                Some(r) if !r.failed => {
                                    line += &format!(
                                        " | {:>12.2} {:>9.2} {:>12} {:>10}",
                                        r.mean_estimate,
                                        r.relative_bias_pct,
                                        r.relative_variance.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into()),
                                        r.relative_mse.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into()),
                                    );
                                }
                                Some(_) => line += &format!(" | {:>12} {:>9} {:>12} {:>10}", "failed", "", "", ""),
                                None => line += &format!(" | {:>12} {:>9} {:>12} {:>10}", "-", "", "", ""),
                            }
                        }
                        let _ = writeln!(out, "{line}");
                    }
                    if let Some(t) = truth {
                        let _ = writeln!(out, "{:<8} {:<9} truth {t:.2}", "", "");
                    }
                }
            }
        }
        for note in &self.failure_notes {
            let _ = writeln!(out, "# {note}");
        }
        out
    }
}

/// Names of the covariates of [`generate_traffic`].
pub const TRAFFIC_COVARIATES: [&str; 8] = [
    "cycle_collisions",
    "bus_stop_density",
    "road_network_density",
    "road_length",
    "domestic_density",
    "non_domestic_density",
    "road_area_density",
    "employment_density",
];

/// Synthetic road-segment data: a heavy-tailed traffic count outcome, a
/// binary intervention indicator and eight site covariates.
pub fn generate_traffic(n: usize, seed: u64) -> Result<Dataset> {
    if n < MIN_DGP_N {
        return Err(Error::InvalidArgument(format!("need at least {MIN_DGP_N} sites, got {n}")));
    }
    let mut r = rng::stream(seed, 0);
    let std = |r: &mut rng::StreamRng| r.sample::<f64, _>(StandardNormal);
    let records = (0..n)
        .map(|_| {
            let collisions = (2.0 + 1.5 * std(&mut r)).abs().floor();
            let bus = (1.0 + 0.4 * std(&mut r)).exp();
            let network = 10.0 + 3.0 * std(&mut r);
            let length = Exp::new(1.0 / 0.8).expect("valid rate").sample(&mut r) + 0.05;
            let domestic = (2.0 + 0.5 * std(&mut r)).exp();
            let non_domestic = (1.0 + 0.7 * std(&mut r)).exp();
            let area = 0.2 + 0.05 * std(&mut r);
            let employment = (3.0 + 0.8 * std(&mut r)).exp();
            let eta = -1.5 + 0.25 * collisions + 0.2 * bus.ln() + 0.1 * (network - 10.0) + 0.3 * non_domestic.ln();
            let treated = r.random::<f64>() < 1.0 / (1.0 + (-eta).exp());
            let log_base = 8.0 + 0.3 * bus.ln() + 0.05 * (network - 10.0) + 0.2 * non_domestic.ln()
                + 0.1 * employment.ln() - 0.2 * domestic.ln().max(0.0) * 0.5
                + if treated { 0.15 } else { 0.0 };
            // Pareto-type multiplicative noise gives a GPD-like upper tail.
            let u: f64 = r.random_range(1e-12..1.0);
            let noise = u.powf(-0.25);
            let outcome = log_base.exp() * noise * (1.0 + 0.1 * std(&mut r)).max(0.2);
            ObservedRecord::new(
                outcome,
                treated,
                vec![collisions, bus, network, length, domestic, non_domestic, area, employment],
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(records, TRAFFIC_COVARIATES.iter().map(|s| s.to_string()).collect())
}
