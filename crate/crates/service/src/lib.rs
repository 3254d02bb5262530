//! Edge side of the detector: session engine and HTTP API, the HTTP
//! transport to model backends, a fixture-replaying model server, and a
//! simulated AR client.

pub mod api;
pub mod client;
pub mod edge;
pub mod error;
pub mod model_server;
pub mod transport;

use std::sync::Arc;

use arsentry_core::config::BackendEndpoints;
use arsentry_core::{BackendError, Backends};

pub use client::{ServiceClient, SimulationOptions, SimulationReport, simulate};
pub use edge::{EdgeService, MitigationDirective, SessionOptions};
pub use error::ServiceError;
pub use transport::HttpTransport;

/// Largest request body either server accepts.
pub const MAX_BODY_BYTES: usize = 64 * 1024 * 1024;

/// HTTP backends for the three model roles.
pub fn http_backends(endpoints: &BackendEndpoints) -> Result<Backends, BackendError> {
    Ok(Backends::new(
        Arc::new(HttpTransport::new(endpoints.vlm.clone())?),
        Arc::new(HttpTransport::new(endpoints.detector.clone())?),
        Arc::new(HttpTransport::new(endpoints.segmenter.clone())?),
    ))
}

/// Serves `router` until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, router: axum::Router) -> std::io::Result<()> {
    axum::serve(listener, router).await
}
