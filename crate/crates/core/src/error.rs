use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("duplicate subject id {0:?}")]
    DuplicateId(String),

    #[error("subject id sets differ; symmetric difference: {0:?}")]
    IdMismatch(Vec<String>),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("rank-deficient design; dependent columns {0:?}")]
    RankDeficient(Vec<usize>),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unknown {kind} {name:?}; available: {available:?}")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: Vec<String>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
