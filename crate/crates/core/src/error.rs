use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error in {file}: {message}")]
    Format { file: String, message: String },

    #[error("inconsistent scenario: {0}")]
    Consistency(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("aggregation error: {0}")]
    Aggregation(String),

    /// The io error is shown inline rather than exposed as a source so
    /// error chains do not print it twice.
    #[error("io error on {path}: {err}")]
    Io { path: PathBuf, err: std::io::Error },

    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(file: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            file: file.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            err: source,
        }
    }
}

pub(crate) fn invalid<T>(message: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(message.into()))
}
