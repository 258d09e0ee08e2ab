use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("duplicate transaction id {0}")]
    DuplicateId(u64),

    #[error("missing column `{0}`")]
    SchemaError(String),

    #[error("parse error at row {row}: {message}")]
    ParseError { row: usize, message: String },

    #[error("index error: {0}")]
    IndexError(String),

    #[error("shape mismatch in {op}: {detail}")]
    ShapeError { op: &'static str, detail: String },

    #[error("segment error: {0}")]
    SegmentError(String),

    #[error("non-finite value produced by {0}")]
    NumericsError(String),

    #[error("contract violated: {0}")]
    ContractError(String),

    #[error("neighborhood is empty")]
    EmptyNeighborhood,

    #[error("causal set is empty")]
    NoCausalNodes,

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeError {
            op,
            detail: detail.into(),
        }
    }
}
