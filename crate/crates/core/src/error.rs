use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("bad header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    /// A candle invariant or ordering rule was violated. `index` is the
    /// zero-based candle index within the series.
    #[error("validation error at index {index}: {invariant}")]
    Validation { index: usize, invariant: String },

    #[error("index {index} out of range for series of length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid window [{start}, {end}) for series of length {len}")]
    InvalidWindow { start: usize, end: usize, len: usize },

    #[error("insufficient history: need {required} candles, have {actual}")]
    InsufficientHistory { required: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("external forecast error: {0}")]
    ExternalForecast(String),

    #[error("non-finite feature `{0}`")]
    NonFiniteFeature(String),

    #[error("dimension mismatch: model has {expected} weights, vector has {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("degenerate training set: {0}")]
    DegenerateClasses(String),

    #[error("training diverged at epoch {epoch}; lower the learning rate")]
    Diverged { epoch: usize },

    #[error("unknown rule `{0}`")]
    UnknownRule(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
