use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("image has a zero dimension")]
    EmptyImage,
    #[error("pixel buffer holds {actual} values, expected {expected}")]
    BufferLength { expected: usize, actual: usize },
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch { left: (u32, u32), right: (u32, u32) },
    #[error("key-object mask is empty")]
    EmptyKeyMask,
    #[error("both masks are empty")]
    BothEmpty,
    #[error("image {actual:?} is smaller than the {min}x{min} minimum")]
    ImageTooSmall { min: u32, actual: (u32, u32) },
    #[error("content mask is empty")]
    EmptyContentMask,
    #[error("content at ({x}, {y}) sized {width}x{height} does not fit the frame")]
    OutOfBounds { x: u32, y: u32, width: u32, height: u32 },
    #[error("image codec: {0}")]
    Codec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Failures talking to a model backend, whether live or scripted.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("unauthorized")]
    Unauthorized,
    #[error("backend returned {actual} masks for {expected} boxes")]
    CountMismatch { expected: usize, actual: usize },
    #[error("no fixture recorded for request {0}")]
    FixtureMiss(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}
