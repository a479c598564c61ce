//! Crate-wide error type.
//!
//! Recoverable failures (bad input shapes, non-PSD matrices, diverging
//! training runs, malformed artifacts) are reported through [`Error`];
//! internal invariant violations panic instead.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller-supplied values violate a documented precondition.
    #[error("invalid input: {0}")]
    Validation(String),

    /// Two objects that must agree on dimensions or label spaces do not.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A matrix required to be symmetric positive semi-definite is not.
    #[error("matrix is not positive semi-definite: {0}")]
    NotPsd(String),

    /// Training produced a non-finite loss and cannot continue.
    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },

    /// An artifact on disk could not be read, written, or parsed.
    #[error("artifact error for {path}: {reason}")]
    Artifact { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Shorthand for [`Error::Validation`] with a formatted message.
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Shorthand for [`Error::Shape`] with a formatted message.
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
