//! Quantile treatment effects at intermediate and extreme probability levels.
//!
//! The proposed estimator models the conditional outcome distribution in two
//! pieces: a set of simultaneous, non-crossing linear quantile regressions for
//! the bulk, and a generalized Pareto tail above a covariate-dependent
//! threshold chosen by sequential goodness-of-fit testing. Averaging the
//! assembled conditional distributions over the covariate sample gives the
//! counterfactual marginal distributions, whose quantiles are differenced into
//! the QTE (`η_p`) or QTT (`ζ_p`).
//!
//! Comparator estimators (outcome regression after a Box–Cox transform,
//! inverse propensity weighting, and the weighted check-loss estimator),
//! bootstrap inference and a Monte Carlo study harness are included.

pub mod baselines;
pub mod bootstrap;
pub mod counterfactual;
pub mod data;
mod error;
pub mod evt;
mod linalg;
pub mod methods;
pub mod qr;
pub mod rng;
pub mod simulation;
pub mod threshold;

pub use counterfactual::{EffectEstimate, Estimand, StepCdf};
pub use error::{Error, Result};
pub use data::{Dataset, ObservedRecord, ProbabilityGrid};
