use std::path::PathBuf;

/// Errors produced across the painting toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate stroke: width {w} / height {h} below minimum extent {min}")]
    DegenerateStroke { w: f64, h: f64, min: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("non-finite cost at ({row}, {col})")]
    NonFiniteCost { row: usize, col: usize },

    #[error("unknown brush kind `{0}`")]
    UnknownBrush(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid stroke set: {0}")]
    InvalidStrokeSet(String),

    #[error("model/config mismatch: {0}")]
    ModelMismatch(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: u64 },

    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[cfg(feature = "model")]
    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),
}

impl Error {
    pub(crate) fn dims(expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
