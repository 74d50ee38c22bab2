use thiserror::Error;

/// Errors shared across all modules of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unsupported kernel for this operation: {0}")]
    UnsupportedKernel(String),
    #[error("no closed form available: {0}")]
    NoClosedForm(String),
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("support violation: {0}")]
    SupportViolation(String),
    #[error("enumeration too large: {0}")]
    TooLarge(String),
    #[error("quadrature did not converge: {0}")]
    QuadratureFailure(String),
    #[error("internal consistency violation: {0}")]
    InternalConsistency(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
