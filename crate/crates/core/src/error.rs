use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{op}: invalid axis {axis} for shape {shape:?}")]
    InvalidAxis {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("backward: loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("backward: variable does not belong to this tape")]
    DetachedGraph,

    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },

    #[error("window [{start}, {end}) exceeds video of {len} frames")]
    WindowExceedsVideo { start: usize, end: usize, len: usize },

    #[error("{0}: geometry mismatch: {1}")]
    GeometryMismatch(&'static str, String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("{path}: bad header: {reason}")]
    BadHeader { path: PathBuf, reason: String },

    #[error("{path}: truncated file at record {index}")]
    TruncatedRecord { path: PathBuf, index: usize },

    #[error("{path}: truncated file while reading tensor `{name}`")]
    TruncatedTensor { path: PathBuf, name: String },

    #[error("{path}: unsupported version {found} (expected {expected})")]
    VersionMismatch {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{path}: missing tensor `{name}`")]
    MissingTensor { path: PathBuf, name: String },

    #[error("{path}: tensor `{name}` has shape {found:?}, expected {expected:?}")]
    TensorShape {
        path: PathBuf,
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },

    #[error("config mismatch on `{key}`: file has {found}, requested {expected}")]
    ConfigMismatch {
        key: String,
        found: String,
        expected: String,
    },

    #[error("gradient check failed: relative error {error:.3e} on `{name}` exceeds {tolerance:.1e}")]
    GradientCheck {
        name: String,
        error: f64,
        tolerance: f64,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
