use std::time::Duration;

use arsentry_core::manipulation::ManipulationError;
use arsentry_core::obstruction::ObstructionError;
use arsentry_core::{BackendError, ImagingError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("key objects were refreshed too recently; retry in {} ms", retry_after.as_millis())]
    Throttled { retry_after: Duration },
    #[error("a manipulation check is already running for this session")]
    Busy,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("model answer contains no yes/no verdict")]
    NoVerdict,
    #[error("model response contained no usable key-object phrase")]
    EmptyResponse,
    #[error("no latency records yet")]
    NoData,
    #[error("cannot write session log: {0}")]
    Log(#[from] std::io::Error),
}

impl From<ImagingError> for ServiceError {
    fn from(e: ImagingError) -> Self {
        ServiceError::InvalidInput(e.to_string())
    }
}

impl From<ObstructionError> for ServiceError {
    fn from(e: ObstructionError) -> Self {
        match e {
            ObstructionError::Backend(b) => ServiceError::Backend(b),
            ObstructionError::EmptyResponse => ServiceError::EmptyResponse,
            other => ServiceError::InvalidInput(other.to_string()),
        }
    }
}

impl From<ManipulationError> for ServiceError {
    fn from(e: ManipulationError) -> Self {
        match e {
            ManipulationError::Backend(b) => ServiceError::Backend(b),
            ManipulationError::NoVerdict | ManipulationError::MissingAnswer(_) => ServiceError::NoVerdict,
            ManipulationError::Imaging(i) => i.into(),
        }
    }
}

impl ServiceError {
    /// Short machine-readable tag used in HTTP error bodies.
    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::Throttled { .. } => "throttled",
            ServiceError::Busy => "busy",
            ServiceError::InvalidInput(_) => "invalid_input",
            ServiceError::Backend(_) => "backend_unavailable",
            ServiceError::NoVerdict => "no_verdict",
            ServiceError::EmptyResponse => "empty_response",
            ServiceError::NoData => "no_data",
            ServiceError::Log(_) => "internal",
        }
    }
}
