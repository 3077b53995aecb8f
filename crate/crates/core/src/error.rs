use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("coordinate {x} mm lies outside the admissible range [{lo}, {hi}]")]
    Domain { x: f64, lo: f64, hi: f64 },

    #[error("parameter out of range: {0}")]
    ParameterRange(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("Cholesky factorisation failed after {attempts} jitter escalations")]
    CholeskyFailure { attempts: usize },

    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("optimisation failed: {0}")]
    OptimizationFailure(String),

    #[error("schema error at line {line}: {msg}")]
    Schema { line: usize, msg: String },

    #[error("pairing error: {0}")]
    Pairing(String),

    #[error("time index not increasing at line {line}: {msg}")]
    Monotonicity { line: usize, msg: String },

    #[error("I/O error on {path}: {source}")]
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
