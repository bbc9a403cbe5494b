use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("unsupported bit depth (maxval {maxval}) in {path}")]
    UnsupportedBitDepth { path: PathBuf, maxval: u32 },
    #[error("frame has no camera intrinsics")]
    MissingIntrinsics,
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("seed is invalid: {0}")]
    InvalidSeed(String),
    #[error("mask is empty")]
    EmptyMask,
    #[error("region has no valid depth")]
    NoValidDepth,
    #[error("matrix is not positive definite: eigenvalue {0:e} below floor")]
    NotPositiveDefinite(f64),
    #[error("requested {requested} dimensions but at most {available} are available")]
    TooManyDimensions { requested: usize, available: usize },
    #[error("descriptor dimension mismatch: expected {expected}, got {actual}")]
    DescriptorDim { expected: usize, actual: usize },
    #[error("missing descriptor for mask {0}")]
    MissingDescriptor(usize),
    #[error("class {0} has fewer than 2 training samples")]
    DegenerateClass(u32),
    #[error("models are untrained")]
    Untrained,
    #[error("segments do not overlap")]
    NoOverlap,
    #[error("image {width}x{height} is too small for a {grid}x{grid} seed grid")]
    ImageTooSmall {
        width: usize,
        height: usize,
        grid: usize,
    },
    #[error("invalid config key `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
