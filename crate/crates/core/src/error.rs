use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("format error in {context}: {message}")]
    Format { context: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("class `{class}` holds {available} samples but the split needs {required}")]
    Capacity {
        class: String,
        available: usize,
        required: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numerical divergence: {0}")]
    Divergence(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            context: context.into(),
            message: message.into(),
        }
    }

    /// Stable process exit code for scripting: 2 configuration, 3 I/O or
    /// format, 4 numerical divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Capacity { .. } | Error::Contract(_) => 2,
            Error::Io { .. } | Error::Format { .. } => 3,
            Error::Divergence(_) => 4,
        }
    }
}
