use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("depth alignment impossible: {0}")]
    Alignment(String),

    #[error("numeric abort at iteration {iteration}: {detail}")]
    NumericAbort { iteration: usize, detail: String },

    #[error("provider `{provider}` failed: {message}")]
    Provider { provider: String, message: String },

    #[error("remote provider returned status {status} ({code}): {message}")]
    RemoteStatus {
        status: u16,
        code: String,
        message: String,
    },

    #[error("malformed data: {0}")]
    Format(String),

    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// True for failures that originate in an image/depth/embedding provider.
    pub fn is_provider_failure(&self) -> bool {
        matches!(self, Error::Provider { .. } | Error::RemoteStatus { .. })
    }
}
