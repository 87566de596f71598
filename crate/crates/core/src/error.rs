use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported image format in {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },
    #[error("corrupt file {path}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid image dimensions {height}x{width}x{channels}")]
    InvalidDimensions {
        height: usize,
        width: usize,
        channels: usize,
    },
    #[error("window size {size} exceeds image {height}x{width}")]
    SizeExceedsImage {
        size: usize,
        height: usize,
        width: usize,
    },
    #[error("stride must be at least 1")]
    InvalidStride,
    #[error("invalid dihedral transform id {0} (expected 0..8)")]
    InvalidTransformId(u8),
    #[error("patch size {patch} larger than pair {height}x{width}")]
    PatchTooLarge {
        patch: usize,
        height: usize,
        width: usize,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("image {height}x{width} too small, need at least {min} pixels per side")]
    ImageTooSmall {
        height: usize,
        width: usize,
        min: usize,
    },

    #[error("{hr} has no counterpart in the LR directory")]
    MissingCounterpart { hr: PathBuf },
    #[error("directory contains no PNG files: {0}")]
    EmptyDirectory(PathBuf),
    #[error("duplicate manifest record ({0})")]
    DuplicateRecord(String),
    #[error("malformed manifest line {line}: {reason}")]
    MalformedManifest { line: usize, reason: String },
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("mixup alpha must be positive, got {0}")]
    InvalidAlpha(f64),
    #[error("lambda {0} outside [0, 1]")]
    LambdaOutOfRange(f64),

    #[error("dimensions {height}x{width} not divisible by {factor}")]
    NotDivisible {
        height: usize,
        width: usize,
        factor: usize,
    },
    #[error("noise sigma must be non-negative, got {0}")]
    NegativeSigma(f64),
    #[error("invalid degradation spec: {0}")]
    InvalidDegradation(String),

    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("channel count {channels} not divisible by {divisor}")]
    ChannelsNotDivisible { channels: usize, divisor: usize },
    #[error("input {height}x{width} not divisible by 4")]
    NotDivisibleBy4 { height: usize, width: usize },
    #[error("malformed weights file: {0}")]
    MalformedWeights(String),

    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),
    #[error("non-finite gradient at iteration {iteration} in parameter {parameter}")]
    NonFiniteGradient { iteration: u64, parameter: String },
    #[error("non-finite loss at iteration {0}")]
    NonFiniteLoss(u64),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::FileNotFound(path.into())
        } else {
            Error::Io {
                path: path.into(),
                source,
            }
        }
    }
}
