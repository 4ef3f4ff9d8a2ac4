use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed wav data: {0}")]
    Decode(String),

    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),

    #[error("clip metadata: {0}")]
    Metadata(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid layer: {0}")]
    Layer(String),

    #[error("filterbank construction failed: {0}")]
    Filterbank(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("feature cache: {0}")]
    Cache(String),

    #[error("training: {0}")]
    Training(String),

    /// A stage was requested before the artifact it consumes was produced.
    #[error("missing prerequisite {path}: {hint}")]
    MissingArtifact { path: PathBuf, hint: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
