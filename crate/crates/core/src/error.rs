use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure category, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed, missing or inconsistent input data.
    Data,
    /// A numerical procedure failed (divergence, non-finite values).
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("non-finite value at element {index}")]
    NonFinite { index: usize },

    #[error("cube has a zero extent ({height}x{width}x{channels})")]
    EmptyCube {
        height: usize,
        width: usize,
        channels: usize,
    },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid class label {label} at pixel {index}")]
    InvalidLabel { label: u8, index: usize },

    #[error("tile size {tile_size} exceeds scene width {width}")]
    TileTooLarge { tile_size: usize, width: usize },

    #[error("band index {band} out of range for {channels} channels")]
    BandOutOfRange { band: usize, channels: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("eigensolver did not converge after {sweeps} sweeps")]
    NonConvergence { sweeps: usize },

    #[error("input too short: length {length}, need at least {needed}")]
    InputTooShort { length: usize, needed: usize },

    #[error("extent {extent} too small for pooling window {window}")]
    ExtentTooSmall { extent: usize, window: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("gradient tape does not match the model: {0}")]
    TapeMissing(String),

    #[error("too few tiles: need at least {needed}, got {got}")]
    TooFewTiles { needed: usize, got: usize },

    #[error("channel {channel} not present in a {channels}-channel tile")]
    ChannelMissing { channel: usize, channels: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("report has no entries")]
    EmptyReport,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O failure: {0}")]
    Io(#[from] io::Error),

    #[error("serialization failure: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Variant name, stable across releases; used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::BadMagic { .. } => "BadMagic",
            Error::DimMismatch(_) => "DimMismatch",
            Error::NonFinite { .. } => "NonFinite",
            Error::EmptyCube { .. } => "EmptyCube",
            Error::UnsupportedFormat(_) => "UnsupportedFormat",
            Error::InvalidLabel { .. } => "InvalidLabel",
            Error::TileTooLarge { .. } => "TileTooLarge",
            Error::BandOutOfRange { .. } => "BandOutOfRange",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::EmptyInput(_) => "EmptyInput",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::InputTooShort { .. } => "InputTooShort",
            Error::ExtentTooSmall { .. } => "ExtentTooSmall",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::TapeMissing(_) => "TapeMissing",
            Error::TooFewTiles { .. } => "TooFewTiles",
            Error::ChannelMissing { .. } => "ChannelMissing",
            Error::NonFiniteLoss { .. } => "NonFiniteLoss",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::EmptyReport => "EmptyReport",
            Error::Parse(_) => "Parse",
            Error::Io(_) => "IoFailure",
            Error::Json(_) => "Parse",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::NonConvergence { .. } | Error::NonFiniteLoss { .. } => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }
}
