use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("schema error: column `{column}` not found in header")]
    Schema { column: String },

    #[error("schema error: column `{column}` appears more than once in header")]
    AmbiguousColumn { column: String },

    #[error("parse error at data row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("input contains no data rows")]
    EmptyInput,

    #[error("invalid probability grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("design matrix is rank deficient")]
    SingularDesign,

    #[error("LP solver did not converge after {iterations} iterations (relative duality gap {gap:e})")]
    SolverFailure { iterations: usize, gap: f64 },

    #[error("value outside the distribution's domain: {0}")]
    Domain(String),

    #[error("insufficient tail: {found} exceedances, at least {required} required")]
    InsufficientTail { found: usize, required: usize },

    #[error("degenerate tail: all exceedances are identical")]
    DegenerateTail,

    #[error("threshold selection failed: {0}")]
    SelectionFailure(String),

    #[error("estimand undefined: {0}")]
    EstimandUndefined(String),

    #[error("complete separation in the propensity model: the likelihood has no finite maximizer")]
    Separation,

    #[error("Newton iterations did not converge: {0}")]
    NonConvergence(String),

    #[error("Box-Cox transform error: {0}")]
    Transform(String),

    #[error("{failed} of {total} replicates failed (dominant failure: {dominant})")]
    ReplicateFailures {
        failed: usize,
        total: usize,
        dominant: String,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// Short stable label used to group failures.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Schema { .. } | Error::AmbiguousColumn { .. } => "schema",
            Error::Parse { .. } => "parse",
            Error::EmptyInput => "empty-input",
            Error::InvalidGrid(_) => "invalid-grid",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::SingularDesign => "singular-design",
            Error::SolverFailure { .. } => "solver-failure",
            Error::Domain(_) => "domain",
            Error::InsufficientTail { .. } => "insufficient-tail",
            Error::DegenerateTail => "degenerate-tail",
            Error::SelectionFailure(_) => "selection-failure",
            Error::EstimandUndefined(_) => "estimand-undefined",
            Error::Separation => "separation",
            Error::NonConvergence(_) => "non-convergence",
            Error::Transform(_) => "transform",
            Error::ReplicateFailures { .. } => "bootstrap-failure",
            Error::Internal(_) => "internal",
        }
    }

    /// True for errors caused by malformed input or arguments rather than by
    /// an estimation procedure failing on valid input.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Schema { .. }
                | Error::AmbiguousColumn { .. }
                | Error::Parse { .. }
                | Error::EmptyInput
                | Error::InvalidGrid(_)
                | Error::InvalidArgument(_)
                | Error::DimensionMismatch { .. }
        )
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let row = err
            .position()
            .map(|p| p.line().saturating_sub(1) as usize)
            .unwrap_or(0);
        Error::Parse {
            row,
            message: err.to_string(),
        }
    }
}
