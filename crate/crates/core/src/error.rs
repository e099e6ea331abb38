//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("corpus layout: {0}")]
    CorpusLayout(String),

    #[error("clip {clip}: {labels} labels for {frames} frames")]
    LabelMismatch {
        clip: String,
        frames: usize,
        labels: usize,
    },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("scene spec: {0}")]
    SceneSpec(String),

    #[error("missing stage output: {what} (run `{command}` first)")]
    MissingStage { what: String, command: String },

    #[error("branch {branch}: zero-variance calibration scores")]
    ZeroVariance { branch: String },

    #[error("AUC undefined: labels contain a single class")]
    SingleClassLabels,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("malformed file {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
