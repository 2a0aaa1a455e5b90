use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dictionary is empty")]
    EmptyDictionary,

    #[error("candidate list is empty")]
    EmptyCandidates,

    #[error(
        "Gram matrix K + {gamma}I is not positive definite (r = {centers}, Q = {kernels}); \
         the dictionary is numerically linearly dependent and the regularization is too small"
    )]
    Factorization {
        centers: usize,
        kernels: usize,
        gamma: f64,
    },

    #[error(
        "no connected geometric graph with J = {nodes}, D = {radius} after {attempts} attempts"
    )]
    NotConnected {
        nodes: usize,
        radius: f64,
        attempts: usize,
    },

    #[error(
        "input is numerically orthogonal to every dictionary center (zero projection denominator)"
    )]
    DegenerateRegressor,

    #[error("field is identically zero on the evaluation grid")]
    ZeroField,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid file, line {line}: {message}")]
    GridFormat { line: usize, message: String },

    #[error("{path}, line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("unknown preset `{0}` (expected multi-gauss, altitude or time-varying)")]
    UnknownPreset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
