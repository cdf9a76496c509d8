//! Error types shared across the crate.

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible tensor/parameter shapes.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// An argument failed validation.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A non-finite value appeared during computation. `layer` is 1-based.
    #[error("non-finite value in layer {layer}: {context}")]
    NonFinite { layer: usize, context: String },

    /// Byte-level parse failure (IDX files and similar), naming the offset.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn parse(offset: u64, msg: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: msg.into(),
        }
    }
}
