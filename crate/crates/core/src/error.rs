//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, KolmoError>;

#[derive(Debug, Error)]
pub enum KolmoError {
    #[error("non-finite input in {0}")]
    NonFinite(&'static str),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("degenerate spherical measure: {0}")]
    Degenerate(String),

    /// The frequency grid does not reach the requested decay of the
    /// characteristic function; carries a suggested enlargement.
    #[error("insufficient frequency decay: {msg}; suggest at least {suggested_points} points per axis")]
    Resolution { msg: String, suggested_points: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("assumption (P) violated: {0}")]
    AssumptionViolated(String),

    #[error("flow propagation failed at t = {t}: {msg}")]
    FlowBlowup { t: f64, msg: String },

    #[error("flow path does not cover [{t}, {s}]")]
    PathCoverage { t: f64, s: f64 },

    #[error("picard iteration diverged: measured contraction factor {factor}")]
    ContractionFailure { factor: f64, history: Vec<f64> },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}
