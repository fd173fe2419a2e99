//! Observational records, CSV ingestion and probability grids.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// One unit: outcome `Y`, binary treatment `D` and covariates `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedRecord {
    pub outcome: f64,
    pub treated: bool,
    pub covariates: Vec<f64>,
}

impl ObservedRecord {
    pub fn new(outcome: f64, treated: bool, covariates: Vec<f64>) -> Result<Self> {
        if !outcome.is_finite() {
            return Err(Error::InvalidArgument(format!("outcome {outcome} is not finite")));
        }
        if let Some(bad) = covariates.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("covariate {bad} is not finite")));
        }
        Ok(Self {
            outcome,
            treated,
            covariates,
        })
    }

    /// Treatment as a 0/1 regressor.
    pub fn treatment(&self) -> f64 {
        if self.treated {
            1.0
        } else {
            0.0
        }
    }
}

/// The full sample. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<ObservedRecord>,
    covariate_names: Vec<String>,
}

impl Dataset {
    pub fn new(records: Vec<ObservedRecord>, covariate_names: Vec<String>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyInput);
        }
        let m = covariate_names.len();
        if let Some(r) = records.iter().find(|r| r.covariates.len() != m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: r.covariates.len(),
            });
        }
        for r in &records {
            if !r.outcome.is_finite() || r.covariates.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite value in record".into()));
            }
        }
        Ok(Self {
            records,
            covariate_names,
        })
    }

    pub fn records(&self) -> &[ObservedRecord] {
        &self.records
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn n_treated(&self) -> usize {
        self.records.iter().filter(|r| r.treated).count()
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.outcome).collect()
    }

    /// Fails unless both arms are nonempty.
    pub fn require_both_arms(&self) -> Result<()> {
        let treated = self.n_treated();
        if treated == 0 || treated == self.n() {
            return Err(Error::EstimandUndefined(format!(
                "need treated and control units, found {treated} treated of {}",
                self.n()
            )));
        }
        Ok(())
    }

    /// Rows drawn by index, in the given order (used for resampling).
    pub fn resample(&self, indices: &[usize]) -> Dataset {
        Dataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            covariate_names: self.covariate_names.clone(),
        }
    }

    /// Same units with outcomes replaced by `f(Y)`.
    pub fn map_outcomes(&self, f: impl Fn(f64) -> f64) -> Result<Dataset> {
        let records = self
            .records
            .iter()
            .map(|r| ObservedRecord::new(f(r.outcome), r.treated, r.covariates.clone()))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(records, self.covariate_names.clone())
    }

    /// Keeps only the named covariates, in the order given.
    pub fn select_covariates<S: AsRef<str>>(&self, names: &[S]) -> Result<Dataset> {
        let idx = names
            .iter()
            .map(|name| {
                let name = name.as_ref();
                self.covariate_names
                    .iter()
                    .position(|c| c == name)
                    .ok_or_else(|| Error::Schema {
                        column: name.to_string(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        let records = self
            .records
            .iter()
            .map(|r| ObservedRecord {
                outcome: r.outcome,
                treated: r.treated,
                covariates: idx.iter().map(|&j| r.covariates[j]).collect(),
            })
            .collect();
        Ok(Dataset {
            records,
            covariate_names: names.iter().map(|s| s.as_ref().to_string()).collect(),
        })
    }

    /// Writes the dataset as CSV with columns `outcome, treatment, covariates...`.
    /// Values use the shortest decimal representation that parses back to the
    /// same `f64`.
    pub fn write_csv<W: Write>(&self, sink: W, outcome_col: &str, treatment_col: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec![outcome_col.to_string(), treatment_col.to_string()];
        header.extend(self.covariate_names.iter().cloned());
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.outcome.to_string(), (r.treated as u8).to_string()];
            row.extend(r.covariates.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()
            .map_err(|e| Error::Internal(format!("flushing CSV output: {e}")))?;
        Ok(())
    }
}

/// Reads a header-first UTF-8 CSV into a [`Dataset`]. Covariates keep the
/// order of `covariate_cols`. Data rows are numbered from 1 in errors.
pub fn ingest_csv<R: Read, S: AsRef<str>>(
    source: R,
    outcome_col: &str,
    treatment_col: &str,
    covariate_cols: &[S],
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = reader.headers()?.clone();
    let locate = |name: &str| {
        let mut hits = header.iter().enumerate().filter(|(_, h)| *h == name).map(|(i, _)| i);
        let first = hits.next().ok_or_else(|| Error::Schema {
            column: name.to_string(),
        })?;
        match hits.next() {
            Some(_) => Err(Error::AmbiguousColumn {
                column: name.to_string(),
            }),
            None => Ok(first),
        }
    };
    let y_idx = locate(outcome_col)?;
    let d_idx = locate(treatment_col)?;
    let x_idx = covariate_cols
        .iter()
        .map(|c| locate(c.as_ref()))
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Parse {
            row: row_no,
            message: e.to_string(),
        })?;
        let cell = |idx: usize, name: &str| -> Result<f64> {
            let raw = row.get(idx).ok_or_else(|| Error::Parse {
                row: row_no,
                message: format!("missing cell for column `{name}`"),
            })?;
            parse_number(raw).ok_or_else(|| Error::Parse {
                row: row_no,
                message: format!("column `{name}`: `{raw}` is not a finite number"),
            })
        };
        let outcome = cell(y_idx, outcome_col)?;
        let d = cell(d_idx, treatment_col)?;
        let treated = if d == 1.0 {
            true
        } else if d == 0.0 {
            false
        } else {
            return Err(Error::Parse {
                row: row_no,
                message: format!("treatment column `{treatment_col}` must be 0 or 1, found {d}"),
            });
        };
        let covariates = x_idx
            .iter()
            .zip(covariate_cols)
            .map(|(&j, name)| cell(j, name.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        records.push(ObservedRecord {
            outcome,
            treated,
            covariates,
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    Dataset::new(
        records,
        covariate_cols.iter().map(|c| c.as_ref().to_string()).collect(),
    )
}

fn parse_number(raw: &str) -> Option<f64> {
    // `f64::from_str` also accepts "inf" and "NaN"; only finite decimals count.
    let starts_ok = raw
        .trim_start_matches(['+', '-'])
        .starts_with(|c: char| c.is_ascii_digit() || c == '.');
    if !starts_ok {
        return None;
    }
    raw.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Probability levels `τ_1 < … < τ_J` with interval weights, split into a bulk
/// segment (quantile regression) and an extreme segment (GPD tail).
///
/// `transition_index` counts the bulk levels, so the transition level is
/// `levels[transition_index - 1]`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ProbabilityGrid {
    levels: Vec<f64>,
    weights: Vec<f64>,
    transition_index: usize,
}

impl ProbabilityGrid {
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn transition_index(&self) -> usize {
        self.transition_index
    }

    pub fn transition_level(&self) -> f64 {
        self.levels[self.transition_index - 1]
    }

    pub fn bulk_levels(&self) -> &[f64] {
        &self.levels[..self.transition_index]
    }

    pub fn extreme_levels(&self) -> &[f64] {
        &self.levels[self.transition_index..]
    }

    pub fn max_level(&self) -> f64 {
        *self.levels.last().expect("grid is nonempty")
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Equidistant bulk levels on `(0, τ_u]` and extreme levels on `(τ_u, τ_max]`.
/// The last weight absorbs `1 − τ_{J−1}` so the weights sum to one.
pub fn build_grid(
    tau_u: f64,
    bulk_count: usize,
    extreme_count: usize,
    tau_max: f64,
) -> Result<ProbabilityGrid> {
    if !(tau_u > 0.0 && tau_u < tau_max && tau_max < 1.0) {
        return Err(Error::InvalidGrid(format!(
            "need 0 < tau_u < tau_max < 1, got tau_u = {tau_u}, tau_max = {tau_max}"
        )));
    }
    if bulk_count < 1 || extreme_count < 1 {
        return Err(Error::InvalidGrid(format!(
            "need at least one bulk and one extreme level, got {bulk_count} and {extreme_count}"
        )));
    }
    let mut levels = Vec::with_capacity(bulk_count + extreme_count);
    for j in 1..=bulk_count {
        levels.push(if j == bulk_count {
            tau_u
        } else {
            j as f64 * tau_u / bulk_count as f64
        });
    }
    let step = (tau_max - tau_u) / extreme_count as f64;
    for j in 1..=extreme_count {
        levels.push(if j == extreme_count {
            tau_max
        } else {
            tau_u + j as f64 * step
        });
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("levels are not strictly increasing".into()));
    }
    let last = levels.len() - 1;
    let weights = (0..levels.len())
        .map(|j| {
            if j == last {
                1.0 - levels[j - 1]
            } else if j == 0 {
                levels[0]
            } else {
                levels[j] - levels[j - 1]
            }
        })
        .collect();
    Ok(ProbabilityGrid {
        levels,
        weights,
        transition_index: bulk_count,
    })
}

/// Parses `start:end:count` into `count` equally spaced levels from `start`
/// to `end` inclusive (a single level when `count` is 1 requires `start == end`).
pub fn parse_level_spec(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.trim().split(':').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidArgument(format!(
            "level spec `{spec}` must have the form start:end:count"
        )));
    }
    let start = parse_probability(parts[0])?;
    let end = parse_probability(parts[1])?;
    let count: usize = parts[2]
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("`{}` is not a level count", parts[2])))?;
    match count {
        0 => Err(Error::InvalidArgument("level count must be at least 1".into())),
        1 if start == end => Ok(vec![start]),
        1 => Err(Error::InvalidArgument(
            "a single level needs start == end".into(),
        )),
        _ if start >= end => Err(Error::InvalidArgument(format!(
            "level spec start {start} must be below end {end}"
        ))),
        _ if count > 10_000 => Err(Error::InvalidArgument(format!("too many levels: {count}"))),
        _ => {
            let step = (end - start) / (count - 1) as f64;
            let levels: Vec<f64> = (0..count)
                .map(|i| if i == count - 1 { end } else { start + i as f64 * step })
                .collect();
            validate_levels(&levels)?;
            Ok(levels)
        }
    }
}

/// Parses a comma-separated list of probabilities in (0, 1).
pub fn parse_probability_list(list: &str) -> Result<Vec<f64>> {
    let out = list
        .split(',')
        .map(parse_probability)
        .collect::<Result<Vec<_>>>()?;
    if out.is_empty() {
        return Err(Error::InvalidArgument("empty probability list".into()));
    }
    Ok(out)
}

fn parse_probability(raw: &str) -> Result<f64> {
    let raw = raw.trim();
    let v = parse_number(raw)
        .ok_or_else(|| Error::InvalidArgument(format!("`{raw}` is not a number")))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(Error::InvalidArgument(format!("probability {v} is outside (0, 1)")))
    }
}

/// Strictly increasing, all inside (0, 1).
pub fn validate_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::InvalidArgument("no probability levels given".into()));
    }
    if let Some(bad) = levels.iter().find(|&&t| !(t > 0.0 && t < 1.0)) {
        return Err(Error::InvalidArgument(format!("level {bad} is outside (0, 1)")));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "levels must be strictly increasing without duplicates".into(),
        ));
    }
    Ok(())
}
