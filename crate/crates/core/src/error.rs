//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any layer of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A tensor/vector dimension did not match what the operation expects.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// An argument violated an operation's precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A text input (CSV, config) failed to parse.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Training produced a non-finite loss or gradient.
    #[error("numerical divergence at iteration {iteration}: {message}")]
    Divergence { iteration: usize, message: String },

    /// Configuration failed validation.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn divergence(iteration: usize, msg: impl Into<String>) -> Self {
        Error::Divergence {
            iteration,
            message: msg.into(),
        }
    }

    /// Process exit code for the CLI: 2 config, 3 divergence, 4 IO, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Divergence { .. } => 3,
            Error::Io(_) => 4,
            _ => 1,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
