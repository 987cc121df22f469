use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("degree {degree} exceeds the configured cap {cap}")]
    DegreeCap { degree: u32, cap: u32 },
    #[error("degree {degree} exceeds the requested bound {bound}")]
    DegreeTooLarge { degree: u32, bound: u32 },
    #[error("zero polynomial where a nonzero one is required")]
    ZeroPolynomial,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("series truncation exhausted")]
    TruncationExhausted,
    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),
    #[error("filter removed {removed:.4} of the mass, above the {limit:.4} limit")]
    FilterAbort { removed: f64, limit: f64 },
    #[error("problem size {size} exceeds cap {cap}")]
    SizeCap { size: usize, cap: usize },
    #[error("solver failed: {0}")]
    SolverFailure(String),
    #[error("estimate is indeterminate: {0}")]
    Indeterminate(String),
    #[error("no candidates survived: {0}")]
    NoCandidates(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
