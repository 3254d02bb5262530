//! Client side of the model backends (vision-language model, open-set
//! detector, promptable segmenter).
//!
//! Every backend speaks wire protocol v1 through a [`Transport`]. The HTTP
//! transport lives in the service crate; [`ScriptedBackend`] replays
//! fixtures so the whole pipeline runs without model weights.

pub mod rle;
pub mod scripted;
pub mod wire;

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

pub use scripted::{Fixture, FixtureStore, Outcome, RecordingTransport, ScriptedBackend};
pub use wire::{EndpointKind, Request, Response};

use crate::error::BackendError;
use crate::frame::Image;
use crate::mask::{BBox, Mask};
use wire::{DetectRequest, SegmentRequest, VlmRequest};

#[async_trait]
pub trait Transport: Send + Sync {
    async fn exchange(&self, request: &Request) -> Result<Response, BackendError>;
}

#[async_trait]
impl<T: Transport + ?Sized> Transport for Arc<T> {
    async fn exchange(&self, request: &Request) -> Result<Response, BackendError> {
        (**self).exchange(request).await
    }
}

/// Where and how to reach one backend over HTTP.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendEndpoint {
    pub base_url: String,
    pub timeout_ms: u64,
    pub retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_token: Option<String>,
}

impl BackendEndpoint {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            timeout_ms: 30_000,
            retries: 1,
            auth_token: None,
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

/// One detector hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
    pub phrase: String,
}

/// Default cap on concurrent requests per backend.
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

/// Typed, validating client over a transport.
///
/// Records the fingerprint of every request it sends, so an evaluation run
/// can report which fixtures it depended on.
#[derive(Clone)]
pub struct ModelClient {
    transport: Arc<dyn Transport>,
    permits: Arc<Semaphore>,
    seen: Arc<Mutex<BTreeSet<String>>>,
}

impl std::fmt::Debug for ModelClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelClient").finish_non_exhaustive()
    }
}

impl ModelClient {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        Self::with_limit(transport, DEFAULT_MAX_IN_FLIGHT)
    }

    pub fn with_limit(transport: Arc<dyn Transport>, max_in_flight: usize) -> Self {
        Self {
            transport,
            permits: Arc::new(Semaphore::new(max_in_flight.max(1))),
            seen: Arc::new(Mutex::new(BTreeSet::new())),
        }
    }

    pub fn fingerprints(&self) -> BTreeSet<String> {
        self.seen.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    async fn send(&self, request: Request) -> Result<Response, BackendError> {
        self.seen
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(request.fingerprint());
        let _permit = self
            .permits
            .acquire()
            .await
            .map_err(|_| BackendError::Unavailable("client closed".into()))?;
        let response = self.transport.exchange(&request).await?;
        if response.kind() != request.kind() {
            return Err(BackendError::MalformedResponse(format!(
                "expected a {} response, got {}",
                request.kind().as_str(),
                response.kind().as_str()
            )));
        }
        Ok(response)
    }

    /// Full text completion for one or two images plus a prompt. Images are
    /// sent in the given order.
    pub async fn vlm_complete(&self, images: &[&Image], prompt: &str) -> Result<String, BackendError> {
        if images.is_empty() || images.len() > 2 {
            return Err(BackendError::InvalidRequest(format!(
                "vlm requests carry one or two images, got {}",
                images.len()
            )));
        }
        let request = Request::Vlm(VlmRequest {
            prompt: prompt.to_owned(),
            images: images.iter().map(|i| wire::encode_image(i)).collect(),
        });
        match self.send(request).await? {
            Response::Vlm(r) => Ok(r.text),
            _ => unreachable!("kind checked in send"),
        }
    }

    /// All detections for the phrases, in backend order.
    pub async fn detect_objects(&self, image: &Image, phrases: &[String]) -> Result<Vec<Detection>, BackendError> {
        if phrases.is_empty() || phrases.iter().any(|p| p.trim().is_empty()) {
            return Err(BackendError::InvalidRequest(
                "detection needs at least one non-empty phrase".into(),
            ));
        }
        let request = Request::Detect(DetectRequest {
            image: wire::encode_image(image),
            phrases: phrases.to_vec(),
        });
        let Response::Detect(r) = self.send(request).await? else {
            unreachable!("kind checked in send")
        };
        let (w, h) = image.dimensions();
        r.detections
            .into_iter()
            .map(|d| {
                let bbox = BBox::from_array(d.bbox);
                if !bbox.is_valid_within(w, h) {
                    return Err(BackendError::MalformedResponse(format!(
                        "box {:?} outside {w}x{h} image",
                        d.bbox
                    )));
                }
                if !(0.0..=1.0).contains(&d.score) {
                    return Err(BackendError::MalformedResponse(format!(
                        "score {} outside [0, 1]",
                        d.score
                    )));
                }
                Ok(Detection {
                    bbox,
                    score: d.score,
                    phrase: d.phrase,
                })
            })
            .collect()
    }

    /// One mask per box, same order. Each mask must stay within a small
    /// dilation of its box.
    pub async fn segment(&self, image: &Image, boxes: &[BBox]) -> Result<Vec<Mask>, BackendError> {
        let (w, h) = image.dimensions();
        if let Some(b) = boxes.iter().find(|b| !b.is_valid_within(w, h)) {
            return Err(BackendError::InvalidRequest(format!(
                "box {b:?} outside {w}x{h} image"
            )));
        }
        let request = Request::Segment(SegmentRequest {
            image: wire::encode_image(image),
            boxes: boxes.iter().map(|b| b.to_array()).collect(),
        });
        let Response::Segment(r) = self.send(request).await? else {
            unreachable!("kind checked in send")
        };
        if r.masks.len() != boxes.len() {
            return Err(BackendError::CountMismatch {
                expected: boxes.len(),
                actual: r.masks.len(),
            });
        }
        r.masks
            .iter()
            .zip(boxes)
            .map(|(m, b)| {
                let mask = rle::decode(m)?;
                if mask.dimensions() != (w, h) {
                    return Err(BackendError::MalformedResponse(format!(
                        "mask {:?} does not match image {w}x{h}",
                        mask.dimensions()
                    )));
                }
                let allowed = b.dilate(segment_slack(b), w, h);
                if mask.iter_set().any(|(x, y)| !allowed.contains(x, y)) {
                    return Err(BackendError::MalformedResponse(format!(
                        "mask extends beyond box {b:?}"
                    )));
                }
                Ok(mask)
            })
            .collect()
    }
}

/// Pixels a mask may spill past its box: 10% of the longer side, at least 4.
pub fn segment_slack(b: &BBox) -> u32 {
    let side = (b.x_max - b.x_min).max(b.y_max - b.y_min);
    (side / 10).max(4)
}

/// The three backend clients a detector needs.
#[derive(Debug, Clone)]
pub struct Backends {
    pub vlm: ModelClient,
    pub detector: ModelClient,
    pub segmenter: ModelClient,
}

impl Backends {
    /// All three roles served by one transport.
    pub fn uniform(transport: Arc<dyn Transport>) -> Self {
        Self::new(transport.clone(), transport.clone(), transport)
    }

    pub fn new(vlm: Arc<dyn Transport>, detector: Arc<dyn Transport>, segmenter: Arc<dyn Transport>) -> Self {
        Self {
            vlm: ModelClient::new(vlm),
            detector: ModelClient::new(detector),
            segmenter: ModelClient::new(segmenter),
        }
    }

    pub fn fingerprints(&self) -> BTreeSet<String> {
        let mut all = self.vlm.fingerprints();
        all.extend(self.detector.fingerprints());
        all.extend(self.segmenter.fingerprints());
        all
    }
}

/// Wall-clock duration of one backend call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendCall {
    pub kind: EndpointKind,
    #[serde(with = "duration_micros")]
    pub duration: Duration,
}

impl BackendCall {
    pub(crate) async fn timed<T, F>(kind: EndpointKind, calls: &mut Vec<BackendCall>, fut: F) -> T
    where
        F: std::future::Future<Output = T>,
    {
        let start = Instant::now();
        let out = fut.await;
        calls.push(BackendCall {
            kind,
            duration: start.elapsed(),
        });
        out
    }
}

pub mod duration_micros {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_micros() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_micros(u64::deserialize(d)?))
    }
}
