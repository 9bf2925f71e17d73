//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Grid or tensor dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A parameter is outside its valid range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A step count does not divide the schedule length.
    #[error("step count {steps} does not divide schedule length {total}")]
    Divisibility { steps: usize, total: usize },

    /// Numerical breakdown (non-finite values, degenerate statistics).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Malformed or unsupported file content.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
