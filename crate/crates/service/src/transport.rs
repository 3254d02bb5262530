//! Wire protocol v1 over HTTP.

use std::time::Duration;

use arsentry_core::gateway::wire::ErrorBody;
use arsentry_core::gateway::{BackendEndpoint, EndpointKind, Request, Response, Transport};
use arsentry_core::BackendError;
use async_trait::async_trait;
use reqwest::StatusCode;

/// Pause before retry `n` (1-based).
fn backoff(n: u32) -> Duration {
    Duration::from_millis(25 * u64::from(n))
}

enum Failure {
    Retry(BackendError),
    Fatal(BackendError),
}

/// Posts requests to `<base_url><endpoint path>`.
///
/// Connection failures, timeouts and 502/503/504 are retried up to
/// `retries` more times. Every attempt is bounded by `timeout_ms`, so one
/// call never takes longer than `timeout_ms * (retries + 1)` plus a few
/// milliseconds of backoff.
#[derive(Debug, Clone)]
pub struct HttpTransport {
    endpoint: BackendEndpoint,
    client: reqwest::Client,
}

impl HttpTransport {
    pub fn new(endpoint: BackendEndpoint) -> Result<Self, BackendError> {
        if !(endpoint.base_url.starts_with("http://") || endpoint.base_url.starts_with("https://")) {
            return Err(BackendError::InvalidRequest(format!(
                "backend url must start with http:// or https://, got {:?}",
                endpoint.base_url
            )));
        }
        if endpoint.timeout_ms == 0 {
            return Err(BackendError::InvalidRequest("timeout_ms must be positive".into()));
        }
        let client = reqwest::Client::builder()
            .timeout(endpoint.timeout())
            .build()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        Ok(Self { endpoint, client })
    }

    pub fn endpoint(&self) -> &BackendEndpoint {
        &self.endpoint
    }

    fn url(&self, kind: EndpointKind) -> String {
        format!("{}{}", self.endpoint.base_url.trim_end_matches('/'), kind.path())
    }

    async fn attempt(&self, request: &Request, body: &[u8]) -> Result<Response, Failure> {
        let mut builder = self
            .client
            .post(self.url(request.kind()))
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_vec());
        if let Some(token) = &self.endpoint.auth_token {
            builder = builder.bearer_auth(token);
        }
        let resp = builder
            .send()
            .await
            .map_err(|e| Failure::Retry(BackendError::Unavailable(describe(&e))))?;
        let status = resp.status();
        let bytes = resp
            .bytes()
            .await
            .map_err(|e| Failure::Retry(BackendError::Unavailable(describe(&e))))?;
        if status.is_success() {
            return Response::from_body(request.kind(), &bytes)
                .map_err(|e| Failure::Fatal(BackendError::MalformedResponse(e.to_string())));
        }
        let err = match serde_json::from_slice::<ErrorBody>(&bytes) {
            Ok(body) => body.into_error(),
            Err(_) if status == StatusCode::UNAUTHORIZED => BackendError::Unauthorized,
            Err(_) if status.is_server_error() => BackendError::Unavailable(format!("http {status}")),
            Err(_) => BackendError::InvalidRequest(format!("http {status}")),
        };
        let transient = matches!(
            status,
            StatusCode::BAD_GATEWAY | StatusCode::SERVICE_UNAVAILABLE | StatusCode::GATEWAY_TIMEOUT
        ) && !matches!(err, BackendError::MalformedResponse(_));
        Err(if transient { Failure::Retry(err) } else { Failure::Fatal(err) })
    }
}

fn describe(e: &reqwest::Error) -> String {
    if e.is_timeout() {
        "request timed out".into()
    } else if e.is_connect() {
        format!("connection failed: {e}")
    } else {
        e.to_string()
    }
}

#[async_trait]
impl Transport for HttpTransport {
    async fn exchange(&self, request: &Request) -> Result<Response, BackendError> {
        let body = serde_json::to_vec(&request.body_json()).expect("json values serialize");
        let mut attempt = 0;
        loop {
            match self.attempt(request, &body).await {
                Ok(r) => return Ok(r),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(e)) => {
                    if attempt >= self.endpoint.retries {
                        return Err(match e {
                            BackendError::Unavailable(m) => BackendError::Unavailable(format!(
                                "{m} (after {} attempts)",
                                attempt + 1
                            )),
                            other => other,
                        });
                    }
                    attempt += 1;
                    log::debug!("{} attempt {attempt} failed: {e}; retrying", request.kind().as_str());
                    tokio::time::sleep(backoff(attempt)).await;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_endpoints() {
        assert!(HttpTransport::new(BackendEndpoint::new("localhost:9000")).is_err());
        let mut e = BackendEndpoint::new("http://localhost:9000/");
        e.timeout_ms = 0;
        assert!(HttpTransport::new(e.clone()).is_err());
        e.timeout_ms = 10;
        let t = HttpTransport::new(e).unwrap();
        assert_eq!(t.url(EndpointKind::Detect), "http://localhost:9000/v1/detect");
    }
}
