//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown field `{0}`")]
    UnknownField(String),

    #[error("invalid field specification: {0}")]
    InvalidField(String),

    #[error("domain too small: {0}")]
    DomainTooSmall(String),

    #[error(
        "step underflow at t = {t:.6e}, x = {x:?}: local tolerance {tolerance:.3e} unreachable"
    )]
    StepUnderflow { t: f64, x: Vec<f64>, tolerance: f64 },

    #[error("characteristics require a smooth field; `{0}` is tagged rough")]
    RoughField(String),

    #[error("invalid grid data: {0}")]
    InvalidGrid(String),

    #[error("test function not resolved: {0}")]
    UnresolvedTestFunction(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
