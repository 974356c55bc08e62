use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{path}: malformed header at line {line}: {msg}")]
    Header {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: unsupported signal format {code} (only 212 is supported)")]
    UnsupportedFormat { path: PathBuf, code: u32 },

    #[error("{path}: truncated signal data at byte offset {offset} (expected {expected} bytes)")]
    Truncated {
        path: PathBuf,
        offset: usize,
        expected: usize,
    },

    #[error("{path}: parse error at byte offset {offset}: {msg}")]
    Parse {
        path: PathBuf,
        offset: usize,
        msg: String,
    },

    #[error("{path}:{line}: {msg}")]
    Text {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("record {record}: only {available} {role} windows available, {requested} requested")]
    Shortage {
        record: String,
        role: String,
        available: usize,
        requested: usize,
    },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("missing evaluation group for input SNR {0} dB")]
    MissingGroup(f64),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
