use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, OpcaError>;

#[derive(Debug, Error)]
pub enum OpcaError {
    #[error("matrix is rank deficient: numerical rank {rank} < {expected}")]
    RankDeficient { rank: usize, expected: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("Gram matrix is numerically singular (pivot {pivot:e} at column {column})")]
    GramSingular { column: usize, pivot: f64 },

    #[error("SVD did not converge")]
    NoConvergence,
    #[error("parameter out of range: {0}")]
    BadRange(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("batch objective is zero in the inconsistent branch")]
    ZeroObjective,

    #[error("traces do not share a recording grid: {0}")]
    GridMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl OpcaError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        OpcaError::Io {
            path: path.into(),
            source,
        }
    }
}
