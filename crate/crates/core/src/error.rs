use std::path::PathBuf;

use thiserror::Error;

use crate::events::SensorGeometry;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("event {0} lies outside the sensor geometry")]
    OutOfBounds(usize),

    #[error("event {0} has a negative timestamp")]
    NegativeTimestamp(usize),

    #[error("window index {index} out of range ({len} windows)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("geometry mismatch: expected {expected}, found {found}")]
    GeometryMismatch {
        expected: SensorGeometry,
        found: SensorGeometry,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("left/right hand mismatch")]
    SideMismatch,

    #[error("wrist position missing for hand {0}")]
    MissingWrist(usize),

    #[error("{pred} predicted samples but {gt} ground-truth samples")]
    SampleCountMismatch { pred: usize, gt: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("rig invariant violated: {0}")]
    InvariantViolation(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("tape already consumed; run the forward pass again before calling backward")]
    TapeExhausted,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("sample {sample_id}: missing file {}", path.display())]
    MissingFile { sample_id: String, path: PathBuf },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
