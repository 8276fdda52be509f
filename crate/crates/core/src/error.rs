use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Input data failed validation (corpus records, dictionary files, manifests).
    #[error("{context}: {message}")]
    Data { context: String, message: String },

    /// Invalid configuration or invalid arguments to an operation.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch in {layer}: {message}")]
    Shape { layer: String, message: String },

    #[error("network error: {0}")]
    Network(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("{0}")]
    Empty(String),

    #[error("insufficient negatives: need {needed}, have {available} (short by {})", needed - available)]
    InsufficientNegatives { needed: usize, available: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Data {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn shape(layer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Shape {
            layer: layer.into(),
            message: message.into(),
        }
    }
}
