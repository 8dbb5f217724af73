use thiserror::Error;

/// Errors raised across the estimation and testing pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("ingestion error at row {row}, column '{column}': {message}")]
    Ingest {
        row: usize,
        column: String,
        message: String,
    },

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("inference error: {0}")]
    Inference(String),

    #[error("study error: {0}")]
    Study(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
