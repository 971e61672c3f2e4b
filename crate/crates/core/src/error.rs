use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the numerical library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("column {column} has zero variance")]
    ZeroVariance { column: usize },

    #[error("simulation diverged: {0}")]
    Divergence(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("step size {step:e} fell below the minimum {min_step:e}")]
    StepUnderflow { step: f64, min_step: f64 },

    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("degenerate ground truth: {0}")]
    DegenerateTruth(String),
}
