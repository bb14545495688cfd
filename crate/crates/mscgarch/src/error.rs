use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by model construction, filtering, stability analysis,
/// estimation, and data ingestion.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid transition matrix: {0}")]
    InvalidTransition(String),

    #[error("invalid series at index {index}: {reason}")]
    InvalidSeries { index: usize, reason: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable category, used by the CLI error envelope.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::InvalidTransition(_) => "invalid_transition",
            Error::InvalidSeries { .. } => "invalid_series",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::Numerical(_) => "numerical",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Io(_) => "io",
        }
    }
}
