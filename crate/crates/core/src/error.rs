use thiserror::Error;

/// Errors produced by the solver library.
///
/// Failures that are part of normal operation (non-convergence of a fit,
/// a KKT condition that does not hold) are reported in result structs,
/// not through this type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    Singular { pivot: usize, value: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("enumeration refused: n = {n} exceeds limit {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("SDP oracle did not converge after {iterations} iterations (last objective {objective})")]
    NoConvergence { iterations: usize, objective: f64 },

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Dimension(_) | Error::TooLarge { .. } => 1,
            Error::Parse { .. }
            | Error::Schema(_)
            | Error::Data(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => 2,
            Error::Singular { .. } | Error::NoConvergence { .. } => 3,
        }
    }
}
