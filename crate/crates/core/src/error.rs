use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library.
///
/// `category()` gives a stable machine-readable tag used by the command line
/// front end when reporting failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{bad} of {total} rows malformed (limit 1%); samples: {samples:?}")]
    MalformedInput {
        bad: usize,
        total: usize,
        samples: Vec<String>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty partition: {0}")]
    EmptyPartition(&'static str),

    #[error("catalog too small: need more than {needed} songs, have {available}")]
    CatalogTooSmall { needed: usize, available: usize },

    #[error("id out of range: {0}")]
    OutOfRange(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss is {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("serialization: {0}")]
    Serde(String),
}

impl Error {
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::MalformedInput { .. } => "malformed-input",
            Error::Config(_) => "config",
            Error::EmptyPartition(_) => "empty-partition",
            Error::CatalogTooSmall { .. } => "catalog",
            Error::OutOfRange(_) => "out-of-range",
            Error::Diverged { .. } => "diverged",
            Error::Checkpoint(_) => "checkpoint",
            Error::Serde(_) => "serialization",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
