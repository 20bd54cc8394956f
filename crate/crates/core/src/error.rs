use std::path::PathBuf;

use crate::corpus::Label;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse grouping used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: record {index}: {message}", path.display())]
    Malformed {
        path: PathBuf,
        index: usize,
        message: String,
    },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("caption references unknown image id {0}")]
    UnknownImage(String),
    #[error("unknown category id {0}")]
    UnknownCategory(i64),
    #[error("invalid example: {0}")]
    InvalidExample(String),
    #[error("unfoilable caption")]
    Unfoilable,
    #[error("no eligible foil candidate: {0}")]
    NoFoilCandidate(String),
    #[error("predicted objects unavailable for image {0}")]
    PredictedUnavailable(String),
    #[error("missing embedding for image {0}")]
    MissingEmbedding(String),
    #[error("inconsistent embedding dimension: expected {expected}, found {found}")]
    EmbeddingDimension { expected: usize, found: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty token sequence")]
    EmptySequence,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("training set contains a single class")]
    SingleClass,
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("empty test set")]
    EmptyTestSet,
    #[error("test set has no {0} examples")]
    MissingClass(Label),
    #[error("model consumes no text features")]
    NoTextFeatures,
    #[error("degenerate design matrix: {0}")]
    DegenerateDesign(String),
    #[error("no eligible examples for the audit")]
    EmptyAudit,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model file: {0}")]
    ModelFile(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Usage,
            Error::NonFiniteLoss { .. } | Error::DegenerateDesign(_) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, index: usize, message: impl ToString) -> Self {
        Error::Malformed {
            path: path.into(),
            index,
            message: message.to_string(),
        }
    }
}
