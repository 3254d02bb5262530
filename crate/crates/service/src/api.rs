//! HTTP front end of [`EdgeService`].
//!
//! | method | path | body |
//! |---|---|---|
//! | POST | `/v1/sessions` | optional JSON [`SessionOptions`] |
//! | GET | `/v1/sessions/{id}` | |
//! | DELETE | `/v1/sessions/{id}` | |
//! | POST | `/v1/sessions/{id}/frames` | multipart `raw`, `aug` (PNG) |
//! | POST | `/v1/sessions/{id}/keyobjects/refresh` | multipart `raw`, optional `variant` |
//! | POST | `/v1/sessions/{id}/manipulation` | multipart `raw`, `aug` |
//! | GET | `/v1/sessions/{id}/latency` | |
//! | GET | `/healthz` | |
//!
//! Errors come back as `{"error": ..., "kind": ...}`.

use std::collections::HashMap;

use arsentry_core::codec;
use arsentry_core::obstruction::PromptVariant;
use arsentry_core::{BackendError, Image};
use axum::extract::{Multipart, Path, State};
use axum::http::{HeaderValue, StatusCode, header};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::edge::{EdgeService, SessionOptions};
use crate::error::ServiceError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    pub kind: String,
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownSession(_) | ServiceError::NoData => StatusCode::NOT_FOUND,
            ServiceError::Throttled { .. } => StatusCode::TOO_MANY_REQUESTS,
            ServiceError::Busy => StatusCode::CONFLICT,
            ServiceError::InvalidInput(_) | ServiceError::Backend(BackendError::InvalidRequest(_)) => {
                StatusCode::BAD_REQUEST
            }
            ServiceError::Backend(_) | ServiceError::NoVerdict | ServiceError::EmptyResponse => StatusCode::BAD_GATEWAY,
            ServiceError::Log(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = ApiError {
            error: self.to_string(),
            kind: self.kind().into(),
        };
        let mut resp = (self.status(), Json(body)).into_response();
        if let ServiceError::Throttled { retry_after } = self {
            let secs = retry_after.as_secs_f64().ceil().max(1.0) as u64;
            resp.headers_mut()
                .insert(header::RETRY_AFTER, HeaderValue::from(secs));
        }
        resp
    }
}

type ApiResult<T> = Result<Json<T>, ServiceError>;

/// Multipart fields by name; a part named `raw.png` counts as `raw`.
async fn read_parts(mut form: Multipart) -> Result<HashMap<String, Vec<u8>>, ServiceError> {
    let mut parts = HashMap::new();
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ServiceError::InvalidInput(format!("multipart: {e}")))?
    {
        let name = field
            .name()
            .or(field.file_name())
            .unwrap_or_default()
            .trim_end_matches(".png")
            .to_owned();
        let data = field
            .bytes()
            .await
            .map_err(|e| ServiceError::InvalidInput(format!("multipart: {e}")))?;
        parts.insert(name, data.to_vec());
    }
    Ok(parts)
}

fn image_part(parts: &HashMap<String, Vec<u8>>, name: &str) -> Result<Image, ServiceError> {
    let bytes = parts
        .get(name)
        .ok_or_else(|| ServiceError::InvalidInput(format!("missing part {name:?}")))?;
    codec::decode_png(bytes).map_err(|e| ServiceError::InvalidInput(format!("{name}: {e}")))
}

fn text_part(parts: &HashMap<String, Vec<u8>>, name: &str) -> Result<Option<String>, ServiceError> {
    parts
        .get(name)
        .map(|b| {
            String::from_utf8(b.clone()).map_err(|_| ServiceError::InvalidInput(format!("{name} is not UTF-8")))
        })
        .transpose()
}

fn parse_variant(name: Option<&str>) -> Result<PromptVariant, ServiceError> {
    name.unwrap_or("standard").parse().map_err(ServiceError::InvalidInput)
}

async fn create_session(
    State(svc): State<EdgeService>,
    body: axum::body::Bytes,
) -> Result<(StatusCode, Json<crate::edge::SessionInfo>), ServiceError> {
    let opts: SessionOptions = if body.iter().all(u8::is_ascii_whitespace) {
        SessionOptions::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ServiceError::InvalidInput(format!("session options: {e}")))?
    };
    Ok((StatusCode::CREATED, Json(svc.create_session(opts)?)))
}

async fn session_info(State(svc): State<EdgeService>, Path(id): Path<String>) -> ApiResult<crate::edge::SessionInfo> {
    Ok(Json(svc.session_info(&id).await?))
}

async fn close_session(State(svc): State<EdgeService>, Path(id): Path<String>) -> Result<StatusCode, ServiceError> {
    svc.close_session(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn frame(
    State(svc): State<EdgeService>,
    Path(id): Path<String>,
    form: Multipart,
) -> ApiResult<crate::edge::FrameResponse> {
    let parts = read_parts(form).await?;
    let raw = image_part(&parts, "raw")?;
    let aug = image_part(&parts, "aug")?;
    Ok(Json(svc.handle_frame(&id, raw, aug).await?))
}

async fn refresh(
    State(svc): State<EdgeService>,
    Path(id): Path<String>,
    form: Multipart,
) -> ApiResult<crate::edge::RefreshResponse> {
    let parts = read_parts(form).await?;
    let raw = image_part(&parts, "raw")?;
    let variant = parse_variant(text_part(&parts, "variant")?.as_deref().map(str::trim))?;
    Ok(Json(svc.trigger_keyobject_refresh(&id, raw, variant).await?))
}

async fn manipulation(
    State(svc): State<EdgeService>,
    Path(id): Path<String>,
    form: Multipart,
) -> ApiResult<crate::edge::ManipulationResponse> {
    let parts = read_parts(form).await?;
    let raw = image_part(&parts, "raw")?;
    let aug = image_part(&parts, "aug")?;
    Ok(Json(svc.handle_manipulation_check(&id, raw, aug).await?))
}

async fn latency(State(svc): State<EdgeService>, Path(id): Path<String>) -> ApiResult<crate::edge::LatencySummary> {
    Ok(Json(svc.latency_stats(&id)?))
}

pub fn router(service: EdgeService) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(session_info).delete(close_session))
        .route("/v1/sessions/{id}/frames", post(frame))
        .route("/v1/sessions/{id}/keyobjects/refresh", post(refresh))
        .route("/v1/sessions/{id}/manipulation", post(manipulation))
        .route("/v1/sessions/{id}/latency", get(latency))
        .layer(axum::extract::DefaultBodyLimit::max(crate::MAX_BODY_BYTES))
        .with_state(service)
}
