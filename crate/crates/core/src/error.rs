use thiserror::Error;

/// Errors produced by the library. The CLI maps them to exit codes via
/// [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration for `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("point {point} of the window is not covered by the interval family")]
    Uncovered { point: f64 },

    #[error("inconsistent piece data at grid index {index}: {reason}")]
    Data { index: usize, reason: String },

    #[error("singular drift at t = {t}: {reason}")]
    Singularity { t: f64, reason: String },

    #[error("numerical degeneracy on path {path} at step {step}: {reason}")]
    Degenerate { path: usize, step: usize, reason: String },

    #[error("non-finite statistic: {0}")]
    NonFinite(String),

    #[error("insufficient sample: need at least {needed} paths, got {got}")]
    InsufficientSample { needed: usize, got: usize },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("malformed report: {0}")]
    Report(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: &str, reason: impl Into<String>) -> Self {
        Error::Config { field: field.to_string(), reason: reason.into() }
    }

    /// Process exit code: 2 for usage/configuration problems, 3 for numerical
    /// degeneracy of any kind.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Io(_) | Error::Json(_) | Error::Report(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
