use thiserror::Error;

/// Errors produced by the discretization, solvers, and experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid basis specification: {0}")]
    InvalidBasis(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("discretization mismatch: {0}")]
    Mismatch(String),
    #[error("index out of truncation: {0}")]
    OutOfTruncation(String),
    #[error("resource guard: {0}")]
    ResourceLimit(String),
    #[error("numerical abort at t = {t}: {what}")]
    NumericalAbort { t: f64, what: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
