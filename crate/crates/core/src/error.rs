use thiserror::Error;

/// Errors produced by the estimators, generators and recurrence tools.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LegopError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Every point was excluded or carried zero kernel weight.
    #[error("empty neighborhood: no point carries kernel weight")]
    EmptyNeighborhood,

    #[error("rank-deficient design in local linear regression")]
    RankDeficient,

    #[error("vanishing AGOP: trace {0:e} too small to normalize")]
    VanishingAgop(f64),

    #[error("matrix is singular or not positive definite")]
    Singular,

    #[error("recurrence diverged at step {step}: nonpositive denominator {denominator:e}")]
    Divergence { step: usize, denominator: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, LegopError>;

impl From<std::io::Error> for LegopError {
    fn from(e: std::io::Error) -> Self {
        LegopError::Io(e.to_string())
    }
}
