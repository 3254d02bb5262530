//! Wire protocol v1 message bodies.
//!
//! All bodies are JSON. Images travel as base64 of their canonical PNG
//! encoding, masks as [`RleMask`]. Box coordinates are integer pixels,
//! `[x_min, y_min, x_max, y_max]` with the max edge exclusive.

use base64::Engine;
use base64::engine::general_purpose::STANDARD as BASE64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::rle::RleMask;
use crate::codec;
use crate::error::{BackendError, ImagingError};
use crate::frame::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointKind {
    Vlm,
    Detect,
    Segment,
}

impl EndpointKind {
    pub fn path(self) -> &'static str {
        match self {
            EndpointKind::Vlm => "/v1/vlm/complete",
            EndpointKind::Detect => "/v1/detect",
            EndpointKind::Segment => "/v1/segment",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EndpointKind::Vlm => "vlm",
            EndpointKind::Detect => "detect",
            EndpointKind::Segment => "segment",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VlmRequest {
    pub prompt: String,
    pub images: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VlmResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectRequest {
    pub image: String,
    pub phrases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireDetection {
    #[serde(rename = "box")]
    pub bbox: [u32; 4],
    pub score: f64,
    pub phrase: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectResponse {
    pub detections: Vec<WireDetection>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub image: String,
    pub boxes: Vec<[u32; 4]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub masks: Vec<RleMask>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Unavailable,
    MalformedResponse,
    Unauthorized,
    CountMismatch,
    FixtureMiss,
    InvalidRequest,
}

/// Body of every 4xx/5xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub kind: ErrorKind,
}

impl From<&BackendError> for ErrorBody {
    fn from(e: &BackendError) -> Self {
        let kind = match e {
            BackendError::Unavailable(_) => ErrorKind::Unavailable,
            BackendError::MalformedResponse(_) => ErrorKind::MalformedResponse,
            BackendError::Unauthorized => ErrorKind::Unauthorized,
            BackendError::CountMismatch { .. } => ErrorKind::CountMismatch,
            BackendError::FixtureMiss(_) => ErrorKind::FixtureMiss,
            BackendError::InvalidRequest(_) => ErrorKind::InvalidRequest,
        };
        ErrorBody {
            error: e.to_string(),
            kind,
        }
    }
}

impl ErrorBody {
    pub fn into_error(self) -> BackendError {
        match self.kind {
            ErrorKind::Unavailable => BackendError::Unavailable(self.error),
            ErrorKind::MalformedResponse | ErrorKind::CountMismatch => {
                BackendError::MalformedResponse(self.error)
            }
            ErrorKind::Unauthorized => BackendError::Unauthorized,
            ErrorKind::FixtureMiss => BackendError::FixtureMiss(self.error),
            ErrorKind::InvalidRequest => BackendError::InvalidRequest(self.error),
        }
    }

    /// HTTP status used when serving this error.
    pub fn status(&self) -> u16 {
        match self.kind {
            ErrorKind::Unauthorized => 401,
            ErrorKind::InvalidRequest => 400,
            ErrorKind::FixtureMiss => 404,
            ErrorKind::MalformedResponse | ErrorKind::CountMismatch => 502,
            ErrorKind::Unavailable => 503,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "snake_case")]
pub enum Request {
    Vlm(VlmRequest),
    Detect(DetectRequest),
    Segment(SegmentRequest),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "snake_case")]
pub enum Response {
    Vlm(VlmResponse),
    Detect(DetectResponse),
    Segment(SegmentResponse),
}

impl Request {
    pub fn kind(&self) -> EndpointKind {
        match self {
            Request::Vlm(_) => EndpointKind::Vlm,
            Request::Detect(_) => EndpointKind::Detect,
            Request::Segment(_) => EndpointKind::Segment,
        }
    }

    /// JSON body as sent over HTTP.
    pub fn body_json(&self) -> serde_json::Value {
        match self {
            Request::Vlm(r) => serde_json::to_value(r),
            Request::Detect(r) => serde_json::to_value(r),
            Request::Segment(r) => serde_json::to_value(r),
        }
        .expect("wire messages always serialize")
    }

    pub fn from_body(kind: EndpointKind, body: &[u8]) -> Result<Request, serde_json::Error> {
        Ok(match kind {
            EndpointKind::Vlm => Request::Vlm(serde_json::from_slice(body)?),
            EndpointKind::Detect => Request::Detect(serde_json::from_slice(body)?),
            EndpointKind::Segment => Request::Segment(serde_json::from_slice(body)?),
        })
    }

    /// Stable identity of a request: SHA-256 over the endpoint kind and the
    /// key-sorted JSON body, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.kind().as_str().as_bytes());
        hasher.update(b"\n");
        hasher.update(canonical_json(&self.body_json()).as_bytes());
        hex::encode(hasher.finalize())
    }
}

impl Response {
    pub fn kind(&self) -> EndpointKind {
        match self {
            Response::Vlm(_) => EndpointKind::Vlm,
            Response::Detect(_) => EndpointKind::Detect,
            Response::Segment(_) => EndpointKind::Segment,
        }
    }

    pub fn body_json(&self) -> serde_json::Value {
        match self {
            Response::Vlm(r) => serde_json::to_value(r),
            Response::Detect(r) => serde_json::to_value(r),
            Response::Segment(r) => serde_json::to_value(r),
        }
        .expect("wire messages always serialize")
    }

    pub fn from_body(kind: EndpointKind, body: &[u8]) -> Result<Response, serde_json::Error> {
        Ok(match kind {
            EndpointKind::Vlm => Response::Vlm(serde_json::from_slice(body)?),
            EndpointKind::Detect => Response::Detect(serde_json::from_slice(body)?),
            EndpointKind::Segment => Response::Segment(serde_json::from_slice(body)?),
        })
    }
}

/// Serializes JSON with object keys sorted at every level and no whitespace.
pub fn canonical_json(value: &serde_json::Value) -> String {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let fields: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical_json(&map[k])))
                .collect();
            format!("{{{}}}", fields.join(","))
        }
        Value::Array(items) => {
            let items: Vec<String> = items.iter().map(canonical_json).collect();
            format!("[{}]", items.join(","))
        }
        other => other.to_string(),
    }
}

pub fn encode_image(image: &Image) -> String {
    BASE64.encode(codec::encode_png(image))
}

pub fn decode_image(data: &str) -> Result<Image, ImagingError> {
    let bytes = BASE64
        .decode(data)
        .map_err(|e| ImagingError::Codec(format!("base64: {e}")))?;
    codec::decode_png(&bytes)
}
