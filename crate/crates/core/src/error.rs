use thiserror::Error;

use crate::graph::ValidationReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("class {0} has no labeled vertices")]
    EmptyClass(u32),

    #[error("invalid graph collection:\n{0}")]
    Invalid(ValidationReport),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid block spec: {0}")]
    BlockSpec(String),

    #[error("k-nearest-neighbor query against an empty training set")]
    EmptyTrainingSet,

    #[error("invalid evaluation protocol: {0}")]
    Protocol(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("non-finite distance between rows {0} and {1}")]
    NonFiniteDistance(usize, usize),

    #[error("vertex id sets have an empty intersection")]
    EmptyIntersection,

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
