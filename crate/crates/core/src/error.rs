use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorfError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported image format: {0}")]
    Format(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cell configuration failed: {0}")]
    Configuration(String),

    #[error("invalid cell: {0}")]
    InvalidCell(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },

    #[error("invalid data: {0}")]
    Data(String),
}

impl CorfError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CorfError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = CorfError> = std::result::Result<T, E>;
