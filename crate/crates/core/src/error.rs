use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the retargeting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate 6D rotation: {0}")]
    DegenerateRotation6D(&'static str),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("invalid depth {0} (must be > 0)")]
    InvalidDepth(f64),

    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),

    #[error("no mask pixel has valid depth")]
    EmptyCloud,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("too few correspondences: {found} < {required}")]
    TooFewCorrespondences { found: usize, required: usize },

    #[error("joint configuration has {got} values, chain has {expected} joints")]
    ConfigLengthMismatch { expected: usize, got: usize },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("frame {index} invalid: {reason}")]
    FrameInvalid { index: usize, reason: String },

    #[error("demo {demo} invalid: {invalid} of {total} frames failed")]
    DemoInvalid {
        demo: String,
        invalid: usize,
        total: usize,
    },

    #[error("schema error in {path}: {field}: {message}")]
    Schema {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(
        path: impl Into<PathBuf>,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Schema {
            path: path.into(),
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
