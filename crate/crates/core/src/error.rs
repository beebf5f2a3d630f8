//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("simulation error: {0}")]
    Simulation(String),

    #[error("cohort ineligibility: {0}")]
    Cohort(String),

    #[error("graph integrity error: {0}")]
    Integrity(String),

    #[error("shape mismatch: expected {expected:?}, got {got:?} in {context}")]
    Shape {
        expected: Vec<usize>,
        got: Vec<usize>,
        context: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("threshold error: {0}")]
    Threshold(String),

    #[error("optimization error: {0}")]
    Optimization(String),

    #[error("archive error: {0}")]
    Archive(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
