//! Uniform entry point over the proposed estimator and the comparators.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::baselines::{firpo_effects, fit_propensity, ipw_effects, or_boxcox_effects, Clamp};
use crate::counterfactual::{run_proposed, EffectEstimate, Estimand, ProposedConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Or,
    Ipw,
    Firpo,
    Proposed,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Or, Method::Ipw, Method::Firpo, Method::Proposed];

    /// Display name used in tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::Or => "OR",
            Method::Ipw => "IPW",
            Method::Firpo => "Firpo",
            Method::Proposed => "Proposed",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Or => "or",
            Method::Ipw => "ipw",
            Method::Firpo => "firpo",
            Method::Proposed => "proposed",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "or" => Ok(Method::Or),
            "ipw" => Ok(Method::Ipw),
            "firpo" => Ok(Method::Firpo),
            "proposed" => Ok(Method::Proposed),
            other => Err(Error::InvalidArgument(format!(
                "unknown method {other:?} (expected proposed, or, ipw, firpo)"
            ))),
        }
    }
}

/// Comma-separated method names, deduplicated in order of appearance.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for part in list.split(',').filter(|s| !s.trim().is_empty()) {
        let m: Method = part.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("no methods requested".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct EstimatorConfig {
    pub proposed: ProposedConfig,
    pub clamp: Clamp,
    pub or_interactions: bool,
    /// Covariates of the outcome models (proposed, OR); all when `None`.
    pub outcome_covariates: Option<Vec<String>>,
    /// Covariates of the propensity model (IPW, Firpo); all when `None`.
    pub propensity_covariates: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodResult {
    pub method: Method,
    pub effects: Vec<EffectEstimate>,
    /// Transition level chosen by the proposed method.
    pub transition_level: Option<f64>,
    pub warnings: Vec<String>,
}

fn subset(data: &Dataset, names: &Option<Vec<String>>) -> Result<Dataset> {
    match names {
        Some(cols) => data.select_covariates(cols),
        None => Ok(data.clone()),
    }
}

/// Runs one method for every `(estimand, p)` pair. `seed` feeds the
/// goodness-of-fit bootstrap of the proposed method.
pub fn estimate(
    data: &Dataset,
    method: Method,
    config: &EstimatorConfig,
    p_list: &[f64],
    estimands: &[Estimand],
    seed: u64,
) -> Result<MethodResult> {
    let mut result = MethodResult {
        method,
        effects: Vec::new(),
        transition_level: None,
        warnings: Vec::new(),
    };
    match method {
        Method::Proposed => {
            let d = subset(data, &config.outcome_covariates)?;
            let run = run_proposed(&d, &config.proposed, p_list, estimands, seed)?;
            result.transition_level = Some(run.selection.selected_level);
            result.warnings = run.fit.warnings;
            result.effects = run.effects;
        }
        Method::Or => {
            let d = subset(data, &config.outcome_covariates)?;
            for &e in estimands {
                result.effects.extend(or_boxcox_effects(&d, p_list, e, config.or_interactions)?);
            }
        }
        Method::Ipw | Method::Firpo => {
            let d = subset(data, &config.propensity_covariates)?;
            let ps = fit_propensity(&d)?;
            for &e in estimands {
                result.effects.extend(if method == Method::Ipw {
                    ipw_effects(&d, &ps, p_list, e, config.clamp)?
                } else {
                    firpo_effects(&d, &ps, p_list, e, config.clamp)?
                });
            }
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_lists_parse() {
        assert_eq!(
            parse_methods("proposed, ipw,firpo,ipw").unwrap(),
            vec![Method::Proposed, Method::Ipw, Method::Firpo]
        );
        assert!(parse_methods("tmle").is_err());
        assert!(parse_methods("").is_err());
    }
}
