use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: String,
        constraint: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("measurement window of {measure} steps is shorter than {min} (10 steps per batch, {batches} batches)")]
    WindowTooShort {
        measure: usize,
        min: usize,
        batches: usize,
    },

    #[error("covariance factorization failed: {0}")]
    Factorization(String),

    #[error("price {target} outside no-arbitrage bounds ({lower}, {upper})")]
    ArbitrageBounds { target: f64, lower: f64, upper: f64 },

    #[error("phase curve has no detected critical point")]
    NoCriticalPoint,

    #[error("control {control} is below the critical point {alpha_c} (crowded branch)")]
    CrowdedBranch { control: f64, alpha_c: f64 },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("root finding did not converge: {0}")]
    NoConvergence(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, value: impl ToString, constraint: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            value: value.to_string(),
            constraint: constraint.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
