use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("no eigenvalue within {tol:e} of {target} (closest singular value {closest:e})")]
    NoFixedPoint { target: f64, tol: f64, closest: f64 },

    #[error("singular configuration: points {i} and {j} are closer than {threshold:e}")]
    SingularConfiguration { i: usize, j: usize, threshold: f64 },

    #[error("overlap condition unsatisfied: best minimum overlap {best:e} is below the floor {floor:e}")]
    OverlapConditionUnsatisfied { best: f64, floor: f64 },

    #[error("dense circuit for n = {n} exceeds the oracle guard n <= {max}; use the fixed-point matrix path")]
    OracleScaleExceeded { n: usize, max: usize },

    #[error("invalid cache file {}: {reason}", path.display())]
    InvalidCache { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::ContractViolation(msg.into())
}
