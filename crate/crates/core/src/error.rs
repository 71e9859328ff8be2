use thiserror::Error;

use crate::shell::Coords;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("coordinate mismatch: expected {expected:?}, found {found:?}")]
    CoordinateMismatch { expected: Coords, found: Coords },

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A state component became non-finite or exceeded the blow-up threshold.
    #[error("blow-up at step {step}{}: {detail}", path.map(|p| format!(" (path {p})")).unwrap_or_default())]
    BlowUp {
        step: usize,
        path: Option<usize>,
        detail: String,
    },

    #[error("{} ensemble paths blew up; first: {first}", count)]
    EnsembleBlowUp { count: usize, first: Box<Error> },

    #[error("stiffness guard violated: dt = {dt:e} exceeds {limit:e}")]
    StiffnessGuard { dt: f64, limit: f64 },

    #[error("series not summable to tolerance {tol:e} within {cap} terms")]
    NotSummable { tol: f64, cap: usize },

    #[error("config parse error at line {line}, column {column}: {message}")]
    ConfigParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("config validation failed:\n  - {}", .0.join("\n  - "))]
    ConfigValidation(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
