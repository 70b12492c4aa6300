use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("state is not in the sector: {0}")]
    NotInSector(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("eigensolver failed: {0}")]
    SolverFailure(String),

    #[error("no eigenvalue inside the energy window of half-width {halfwidth}")]
    EmptyWindow { halfwidth: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("singular normal matrix in fit")]
    SingularFit,

    #[error("cache file {path} is corrupt: {reason}")]
    CorruptCache { path: PathBuf, reason: String },

    #[error("cache file {path} has format version {found}, expected {expected}")]
    CacheVersion {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("cache file {path} failed its checksum")]
    CacheChecksum { path: PathBuf },

    #[error("cache file {path} was written for different model parameters: {reason}")]
    CacheParameterMismatch { path: PathBuf, reason: String },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
