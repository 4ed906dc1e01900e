use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("format error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("truncated input: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("invalid value: {0}")]
    Value(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid kernel: {0}")]
    Kernel(String),

    #[error("degenerate kernel: sampled L1 mass is zero")]
    DegenerateKernel,

    #[error("filtration is not monotone: simplex {coface} has value below its face {face}")]
    NotMonotone { face: usize, coface: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("cache entry {0} is corrupt (content hash mismatch)")]
    CacheCorrupt(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
