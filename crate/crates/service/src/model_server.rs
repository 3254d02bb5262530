//! Serves wire protocol v1 from any [`Transport`], e.g. a fixture directory
//! replayed through a [`ScriptedBackend`](arsentry_core::gateway::ScriptedBackend).

use std::sync::Arc;

use arsentry_core::gateway::wire::ErrorBody;
use arsentry_core::gateway::{EndpointKind, Request, Transport};
use arsentry_core::BackendError;
use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode, header};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};

#[derive(Clone)]
struct ServerState {
    transport: Arc<dyn Transport>,
    auth_token: Option<Arc<str>>,
}

fn error_response(e: &BackendError) -> Response {
    let body = ErrorBody::from(e);
    let status = StatusCode::from_u16(body.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, Json(body)).into_response()
}

async fn handle(state: ServerState, kind: EndpointKind, headers: HeaderMap, body: Bytes) -> Response {
    if let Some(token) = &state.auth_token {
        let expected = format!("Bearer {token}");
        let given = headers.get(header::AUTHORIZATION).and_then(|v| v.to_str().ok());
        if given != Some(expected.as_str()) {
            return error_response(&BackendError::Unauthorized);
        }
    }
    let request = match Request::from_body(kind, &body) {
        Ok(r) => r,
        Err(e) => return error_response(&BackendError::InvalidRequest(e.to_string())),
    };
    match state.transport.exchange(&request).await {
        Ok(r) if r.kind() == kind => Json(r.body_json()).into_response(),
        Ok(r) => error_response(&BackendError::MalformedResponse(format!(
            "transport answered a {} request with {}",
            kind.as_str(),
            r.kind().as_str()
        ))),
        Err(e) => error_response(&e),
    }
}

/// Router for `POST /v1/vlm/complete`, `/v1/detect`, `/v1/segment` and
/// `GET /healthz`. With `auth_token` set, requests must carry it as a
/// bearer token.
pub fn router(transport: Arc<dyn Transport>, auth_token: Option<String>) -> Router {
    let state = ServerState {
        transport,
        auth_token: auth_token.map(Into::into),
    };
    let mut r = Router::new().route("/healthz", get(|| async { "ok" }));
    for kind in [EndpointKind::Vlm, EndpointKind::Detect, EndpointKind::Segment] {
        r = r.route(
            kind.path(),
            post(move |State(s): State<ServerState>, headers: HeaderMap, body: Bytes| handle(s, kind, headers, body)),
        );
    }
    r.layer(axum::extract::DefaultBodyLimit::max(crate::MAX_BODY_BYTES))
        .with_state(state)
}
