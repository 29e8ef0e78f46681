//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown response token {token:?} not present in ordinal map")]
    UnknownToken { token: String },

    #[error("cannot parse token {token:?} as a number")]
    ParseFailure { token: String },

    #[error("missing column {column:?} in {path}")]
    MissingColumn { column: String, path: String },

    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("frame too small: {0}")]
    EmptyFrame(String),

    #[error("labeled budget {n_human} must be below the frame size {frame}")]
    BudgetExceedsFrame { n_human: usize, frame: usize },

    #[error("labeled and unlabeled frames share {count} respondent id(s), e.g. {example:?}")]
    Overlap { count: usize, example: String },

    #[error("estimating equation: no sign change after {doublings} bracket doublings")]
    NoBracket { doublings: u32 },

    #[error("estimating equation: score is not monotone over the bracket")]
    NonMonotoneScore,

    #[error("design matrix is numerically singular (condition number {cond:.3e})")]
    SingularDesign { cond: f64 },

    #[error("logistic regression did not converge: score norm {score_norm:.3e} after {iterations} iterations")]
    NoConvergence { score_norm: f64, iterations: usize },

    #[error("logistic regression diverged; labels appear completely separated")]
    CompleteSeparation,

    #[error("true value is zero; relative bias undefined")]
    ZeroTruth,

    #[error("method variance must be positive, got {0}")]
    ZeroMethodVariance(f64),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("unknown group key {key:?}; frame has {available:?}")]
    UnknownGroupKey { key: String, available: Vec<String> },

    #[error("group {group:?} has zero truth mean; relative bias undefined")]
    ZeroGroupTruthMean { group: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("correlation target {target} is unattainable with additive noise")]
    UnattainableCorrelation { target: f64 },

    #[error("invalid learning curve: {0}")]
    InvalidCurve(String),

    #[error("allocation share {share} outside the open interval (0, 1)")]
    ShareOutOfRange { share: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures of the numeric machinery (as opposed to bad input).
    /// The CLI maps these to a distinct exit code.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NoBracket { .. }
                | Error::NonMonotoneScore
                | Error::SingularDesign { .. }
                | Error::NoConvergence { .. }
                | Error::CompleteSeparation
                | Error::ZeroTruth
                | Error::ZeroMethodVariance(_)
                | Error::ZeroGroupTruthMean { .. }
                | Error::UnattainableCorrelation { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
