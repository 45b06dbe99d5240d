use std::path::PathBuf;

use thiserror::Error;

use crate::llm::BackendError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("graph construction failed: {}", .0.join("; "))]
    GraphConstruction(Vec<String>),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("no answered questions to aggregate")]
    EmptyInput,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("extraction failed: {0}")]
    Extraction(String),

    #[error("knowledge augmentation failed: {0}")]
    Knowledge(String),

    #[error("answer failed: {0}")]
    Answer(String),

    #[error("empty video: no decodable frames in {0}")]
    EmptyVideo(PathBuf),

    #[error("frame extraction command failed ({status}): {output}")]
    FrameExtraction { status: String, output: String },

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
