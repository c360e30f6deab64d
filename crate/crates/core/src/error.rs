use thiserror::Error;

/// Errors produced by graph construction, model updates, and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid ingredient tree: {0}")]
    InvalidTree(String),
    #[error("invalid element graph: {0}")]
    InvalidGraph(String),
    #[error("no feasible creative exists")]
    NoFeasibleCreative,
    #[error("infeasible creative: {0}")]
    InfeasibleCreative(String),
    #[error("element index out of range: ingredient {ingredient} has {count} elements, got {index}")]
    ElementOutOfRange {
        ingredient: usize,
        count: usize,
        index: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("posterior covariance is not positive definite")]
    PosteriorNotPd,
    #[error("graph does not match the environment the policy was built for")]
    GraphMismatch,
    #[error("unknown creative: {0}")]
    UnknownCreative(String),
    #[error("unknown policy name `{0}`")]
    UnknownPolicy(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
