//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value is out of range or otherwise unusable.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two tensors (or a tensor and a config) disagree on dimensions.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A corpus file could not be parsed; `line` is 1-based.
    #[error("corpus error at line {line}: {message}")]
    Corpus { line: usize, message: String },

    /// A NaN or infinity appeared where a finite number was required.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// A checkpoint file is malformed or inconsistent with itself.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// A stored integrity hash does not match the recomputed one.
    #[error("hash mismatch for {what}: stored {stored}, computed {computed}")]
    HashMismatch {
        what: String,
        stored: String,
        computed: String,
    },

    /// A gradient check exceeded its tolerance.
    #[error("gradient check failed: {0}")]
    GradientCheck(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub fn corpus(line: usize, message: impl Into<String>) -> Self {
        Error::Corpus {
            line,
            message: message.into(),
        }
    }

    pub fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }
}
