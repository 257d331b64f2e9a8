use std::path::PathBuf;

use beamloc_tensor::TensorError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("channel generation failed: {0}")]
    Generation(String),
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
    #[error("format version {found} is not supported (expected major {expected}); re-create the file with this release")]
    Migration { found: String, expected: u32 },
    #[error("digest mismatch for {path}: manifest says {expected}, file hashes to {actual}")]
    Digest {
        path: PathBuf,
        expected: String,
        actual: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Numeric failures raised while training epoch `epoch` become
    /// [`Error::Diverged`]; anything else passes through.
    pub fn diverged_at(self, epoch: usize) -> Self {
        match self {
            Error::Numeric(detail) | Error::Tensor(TensorError::Numeric(detail)) => Error::Diverged { epoch, detail },
            other => other,
        }
    }

    /// Process exit status: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Migration { .. } | Error::Contract(_) | Error::State(_) => 2,
            Error::Data(_) | Error::Digest { .. } | Error::Io { .. } | Error::Generation(_) => 3,
            Error::Numeric(_) | Error::Diverged { .. } => 4,
            Error::Tensor(TensorError::Numeric(_)) => 4,
            Error::Tensor(_) => 2,
        }
    }
}
