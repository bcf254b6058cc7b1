use thiserror::Error;

use crate::format::FpxFormat;

pub type Result<T, E = FpxError> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Each variant has a stable short code (see [`FpxError::code`]) so that the
/// CLI and scripts can branch on the kind of failure without parsing text.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FpxError {
    #[error("invalid format: {0}")]
    InvalidFormat(String),

    #[error("code {code:#x} out of range for {format}")]
    InvalidCode { code: u32, format: FpxFormat },

    #[error("cannot encode non-finite value {0}")]
    InvalidValue(f32),

    #[error("row {row}: scale {scale} is not usable in half precision ({reason})")]
    ScaleOverflow { row: usize, scale: f32, reason: &'static str },

    #[error("{format} spans values beyond the half-precision range")]
    HalfRangeExceeded { format: FpxFormat },

    #[error("invalid split scheme {widths:?} for {format}: {reason}")]
    InvalidSplit { widths: Vec<u8>, format: FpxFormat, reason: &'static str },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("dimensions {rows}x{cols} are not multiples of 64; pad at quantize time")]
    NotPadded { rows: usize, cols: usize },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("ragged warp input: thread {thread} has {got} words, expected {expected}")]
    RaggedWarp { thread: usize, got: usize, expected: usize },

    #[error("corrupt file at byte offset {offset}: {message}")]
    CorruptFile { offset: u64, message: String },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("pipeline trace violation: {0}")]
    TraceViolation(String),
}

impl FpxError {
    /// Stable identifier for the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            FpxError::InvalidFormat(_) => "invalid-format",
            FpxError::InvalidCode { .. } => "invalid-code",
            FpxError::InvalidValue(_) => "invalid-value",
            FpxError::ScaleOverflow { .. } => "scale-overflow",
            FpxError::HalfRangeExceeded { .. } => "half-range-exceeded",
            FpxError::InvalidSplit { .. } => "invalid-split",
            FpxError::DimensionMismatch(_) => "dimension-mismatch",
            FpxError::NotPadded { .. } => "not-padded",
            FpxError::IndexOutOfRange(_) => "index-out-of-range",
            FpxError::RaggedWarp { .. } => "ragged-warp",
            FpxError::CorruptFile { .. } => "corrupt-file",
            FpxError::Io(_) => "io",
            FpxError::TraceViolation(_) => "trace-violation",
        }
    }

    /// Byte offset for file errors, when one is known.
    pub fn offset(&self) -> Option<u64> {
        match self {
            FpxError::CorruptFile { offset, .. } => Some(*offset),
            _ => None,
        }
    }

    pub(crate) fn corrupt(offset: usize, message: impl Into<String>) -> Self {
        FpxError::CorruptFile { offset: offset as u64, message: message.into() }
    }
}

impl From<std::io::Error> for FpxError {
    fn from(e: std::io::Error) -> Self {
        FpxError::Io(e.to_string())
    }
}
