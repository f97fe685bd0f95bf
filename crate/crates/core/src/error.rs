use thiserror::Error;

use crate::model::CandidateId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown candidate {0}")]
    UnknownCandidate(CandidateId),

    #[error("unknown feature {0:?}")]
    UnknownFeature(String),

    #[error("unknown algorithm {0:?}")]
    UnknownAlgorithm(String),

    #[error("preset is not independent: {0} and {1} conflict")]
    NotIndependent(CandidateId, CandidateId),

    #[error("fixated candidates {0} and {1} conflict; unfix one of them")]
    FixationConflict(CandidateId, CandidateId),

    #[error("inconsistent delta: {0}")]
    InconsistentDelta(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("record {index}: {message}")]
    BadRecord { index: usize, message: String },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("mismatched configurations: {0}")]
    ConfigMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
