use std::path::PathBuf;

use cardioquant_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {detail}")]
    Parse { path: PathBuf, detail: String },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("degenerate sequence: {0}")]
    Degenerate(String),

    #[error("dataset at {0} contains no subjects")]
    EmptyDataset(PathBuf),

    #[error("not enough samples: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("{path}: weight blob checksum mismatch (manifest {expected}, blob {actual})")]
    Checksum {
        path: PathBuf,
        expected: String,
        actual: String,
    },

    #[error("{path}: unsupported weight format version {found} (expected {expected})")]
    FormatVersion { path: PathBuf, found: u32, expected: u32 },

    #[error("parameter plan mismatch: {0}")]
    PlanMismatch(String),

    #[error("architecture mismatch: expected {expected}, found {found}")]
    ArchitectureMismatch { expected: String, found: String },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
