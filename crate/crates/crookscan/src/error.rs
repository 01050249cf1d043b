use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("structural mismatch: {0}")]
    Structural(String),

    /// AUC and friends need at least one sample of each class.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("parse error in {what} at record {record}: {message}")]
    Parse {
        what: String,
        record: usize,
        message: String,
    },

    #[error("schema error in {what} at record {record}: {message}")]
    Schema {
        what: String,
        record: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
