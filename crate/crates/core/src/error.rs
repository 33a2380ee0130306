use alloc::string::String;
use core::fmt;

use crate::prompt::PromptKind;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Height or width was zero, or the pixel buffer length disagrees with them.
    InvalidDimensions { height: usize, width: usize },
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    InvalidParameter(&'static str),
    EmptyMask,
    /// The clamped crop window contains no pixels.
    CropOutOfBounds,
    MissingMask(PromptKind),
    /// Shrinking the region eroded its mask away entirely.
    DegenerateRegion,
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    UnknownPromptKind(String),
    EmptyInput(&'static str),
    InvalidRle(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidDimensions { height, width } => {
                write!(f, "invalid image dimensions {height}x{width}")
            }
            Error::DimensionMismatch { expected, found } => write!(
                f,
                "dimension mismatch: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::InvalidParameter(what) => write!(f, "invalid parameter: {what}"),
            Error::EmptyMask => f.write_str("mask has no set pixels"),
            Error::CropOutOfBounds => f.write_str("crop box lies outside the image"),
            Error::MissingMask(kind) => {
                write!(f, "prompt kind {} requires a segmentation mask", kind.code())
            }
            Error::DegenerateRegion => f.write_str("region eroded to an empty mask"),
            Error::ShapeMismatch { expected, found } => write!(
                f,
                "score matrix shape mismatch: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::UnknownPromptKind(code) => write!(f, "unknown prompt kind `{code}`"),
            Error::EmptyInput(what) => write!(f, "empty input: {what}"),
            Error::InvalidRle(what) => write!(f, "invalid RLE: {what}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
