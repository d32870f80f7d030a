use thiserror::Error;

#[derive(Debug, Error)]
pub enum PepError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("tag `{0}` is already registered")]
    DuplicateTag(String),
    #[error("unknown tag or point `{0}`")]
    UnknownTag(String),
    #[error("invalid function class: {0}")]
    InvalidFunctionClass(String),
    #[error("invalid matrix class: {0}")]
    InvalidMatrixClass(String),
    #[error("invalid algorithm: {0}")]
    InvalidAlgorithm(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("invalid metric or initial condition: {0}")]
    InvalidMetric(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid log fit: {0}")]
    InvalidLogFit(String),
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, PepError>;
