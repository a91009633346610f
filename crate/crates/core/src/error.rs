use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CongoError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("measurement error: {0}")]
    Measurement(String),

    #[error("io error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl CongoError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        CongoError::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CongoError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = CongoError> = std::result::Result<T, E>;
