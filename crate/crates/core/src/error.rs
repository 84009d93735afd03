use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch(Shape, Shape),

    #[error("no threshold count k <= {n} meets false positive rate {target_fpr}")]
    InfeasibleThreshold { n: usize, target_fpr: f64 },

    #[error("correlation undefined for constant input")]
    UndefinedCorrelation,

    #[error("linear codec clamped pixel {index}; the oracle requires exact linearity")]
    OracleViolation { index: usize },

    #[error("training diverged at epoch {epoch}: {reason}")]
    TrainingDiverged { epoch: usize, reason: String },

    #[error("invalid probability table: {0}")]
    InvalidTable(String),
}

use crate::image::Shape;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn ensure_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, actual })
    }
}
