use std::io;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("non-monotonic timestamp at line {line}")]
    NonMonotonic { line: usize },

    #[error("event ({x},{y}) out of bounds for {width}x{height} sensor{}", line_suffix(*.line))]
    OutOfBounds {
        x: u64,
        y: u64,
        width: u16,
        height: u16,
        line: Option<usize>,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch in {context}: expected {expected:?}, got {got:?}")]
    DimMismatch {
        context: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn line_suffix(line: Option<usize>) -> String {
    line.map(|l| format!(" at line {l}")).unwrap_or_default()
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn dim_mismatch(context: &str, expected: &[usize], got: &[usize]) -> Error {
    Error::DimMismatch {
        context: context.to_string(),
        expected: expected.to_vec(),
        got: got.to_vec(),
    }
}
