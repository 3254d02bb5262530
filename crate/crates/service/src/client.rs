//! HTTP client for the edge service and a simulated AR client that streams
//! a dataset through it.

use std::time::{Duration, Instant};

use arsentry_core::codec;
use arsentry_core::eval::dataset::ObstructionSample;
use arsentry_core::eval::{Dataset, TaskKind};
use arsentry_core::obstruction::PromptVariant;
use arsentry_core::Image;
use futures::stream::{self, StreamExt, TryStreamExt};
use reqwest::multipart::{Form, Part};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::api::ApiError;
use crate::edge::{
    Distribution, FrameResponse, LatencySummary, ManipulationResponse, MitigationDirective, RefreshResponse,
    SessionInfo, SessionOptions,
};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("service answered {status}: {} ({})", body.error, body.kind)]
    Api { status: u16, body: ApiError },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone)]
pub struct ServiceClient {
    base: String,
    http: reqwest::Client,
}

fn png_part(image: &Image, name: &str) -> Part {
    Part::bytes(codec::encode_png(image))
        .file_name(format!("{name}.png"))
        .mime_str("image/png")
        .expect("static mime type")
}

impl ServiceClient {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, ClientError> {
        let http = reqwest::Client::builder().timeout(timeout).build()?;
        Ok(Self {
            base: base_url.trim_end_matches('/').to_owned(),
            http,
        })
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, ClientError> {
        let status = resp.status();
        let bytes = resp.bytes().await?;
        if status.is_success() {
            return serde_json::from_slice(&bytes).map_err(|e| ClientError::Invalid(format!("bad response body: {e}")));
        }
        let body = serde_json::from_slice(&bytes).unwrap_or_else(|_| ApiError {
            error: String::from_utf8_lossy(&bytes).into_owned(),
            kind: "unknown".into(),
        });
        Err(ClientError::Api {
            status: status.as_u16(),
            body,
        })
    }

    pub async fn health(&self) -> Result<(), ClientError> {
        let resp = self.http.get(format!("{}/healthz", self.base)).send().await?;
        resp.error_for_status()?;
        Ok(())
    }

    pub async fn create_session(&self, opts: &SessionOptions) -> Result<SessionInfo, ClientError> {
        let resp = self
            .http
            .post(format!("{}/v1/sessions", self.base))
            .json(opts)
            .send()
            .await?;
        Self::decode(resp).await
    }

    pub async fn send_frame(&self, session: &str, raw: &Image, aug: &Image) -> Result<FrameResponse, ClientError> {
        let form = Form::new().part("raw", png_part(raw, "raw")).part("aug", png_part(aug, "aug"));
        let resp = self
            .http
            .post(format!("{}/v1/sessions/{session}/frames", self.base))
            .multipart(form)
            .send()
            .await?;
        Self::decode(resp).await
    }

    pub async fn refresh(
        &self,
        session: &str,
        raw: &Image,
        variant: &PromptVariant,
    ) -> Result<RefreshResponse, ClientError> {
        let form = Form::new()
            .part("raw", png_part(raw, "raw"))
            .text("variant", variant.name());
        let resp = self
            .http
            .post(format!("{}/v1/sessions/{session}/keyobjects/refresh", self.base))
            .multipart(form)
            .send()
            .await?;
        Self::decode(resp).await
    }

    pub async fn check_manipulation(
        &self,
        session: &str,
        raw: &Image,
        aug: &Image,
    ) -> Result<ManipulationResponse, ClientError> {
        let form = Form::new().part("raw", png_part(raw, "raw")).part("aug", png_part(aug, "aug"));
        let resp = self
            .http
            .post(format!("{}/v1/sessions/{session}/manipulation", self.base))
            .multipart(form)
            .send()
            .await?;
        Self::decode(resp).await
    }

    pub async fn latency(&self, session: &str) -> Result<LatencySummary, ClientError> {
        let resp = self
            .http
            .get(format!("{}/v1/sessions/{session}/latency", self.base))
            .send()
            .await?;
        Self::decode(resp).await
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOptions {
    /// Frames in flight per session.
    pub pipeline: usize,
    pub alpha: Option<f64>,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            pipeline: 1,
            alpha: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameOutcome {
    pub id: String,
    pub key_object: String,
    pub label: bool,
    pub seq: u64,
    pub obstructed: bool,
    pub directive: MitigationDirective,
    pub round_trip_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session: String,
    pub key_object: String,
    pub latency: LatencySummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub frames: Vec<FrameOutcome>,
    pub correct: usize,
    /// Every session answered its frames with sequence numbers 0, 1, 2, ...
    /// in the order they were sent.
    pub ordered: bool,
    pub round_trip: Option<Distribution>,
    pub sessions: Vec<SessionReport>,
}

/// Streams an obstruction dataset through the service, one session per
/// distinct key object, seeded with that object.
pub async fn simulate(
    client: &ServiceClient,
    dataset: &Dataset,
    opts: &SimulationOptions,
) -> Result<SimulationReport, ClientError> {
    let Dataset::Obstruction { samples, .. } = dataset else {
        return Err(ClientError::Invalid(format!(
            "simulation needs an {} dataset, got {}",
            TaskKind::Obstruction,
            dataset.kind()
        )));
    };
    let mut groups: Vec<(String, Vec<&ObstructionSample>)> = Vec::new();
    for s in samples {
        match groups.iter_mut().find(|(k, _)| *k == s.key_object) {
            Some((_, g)) => g.push(s),
            None => groups.push((s.key_object.clone(), vec![s])),
        }
    }
    let mut frames = Vec::with_capacity(samples.len());
    let mut sessions = Vec::new();
    let mut ordered = true;
    for (key_object, group) in groups {
        let info = client
            .create_session(&SessionOptions {
                alpha: opts.alpha,
                key_objects: vec![key_object.clone()],
                ..SessionOptions::default()
            })
            .await?;
        let session = info.id.to_string();
        let results: Vec<FrameOutcome> = stream::iter(group)
            .map(|s| {
                let session = session.as_str();
                let key_object = key_object.as_str();
                async move {
                    let pair = s
                        .load_pair()
                        .map_err(|e| ClientError::Invalid(format!("{}: {e}", s.id)))?;
                    let start = Instant::now();
                    let r = client.send_frame(session, pair.raw(), pair.augmented()).await?;
                    Ok::<_, ClientError>(FrameOutcome {
                        id: s.id.clone(),
                        key_object: key_object.to_owned(),
                        label: s.obstructed,
                        seq: r.seq,
                        obstructed: r.obstructed,
                        directive: r.directive,
                        round_trip_ms: start.elapsed().as_secs_f64() * 1e3,
                    })
                }
            })
            .buffered(opts.pipeline.max(1))
            .try_collect()
            .await?;
        ordered &= results.iter().enumerate().all(|(i, f)| f.seq == i as u64);
        sessions.push(SessionReport {
            session: session.clone(),
            key_object,
            latency: client.latency(&session).await?,
        });
        frames.extend(results);
    }
    let correct = frames.iter().filter(|f| f.obstructed == f.label).count();
    let rtt: Vec<f64> = frames.iter().map(|f| f.round_trip_ms).collect();
    Ok(SimulationReport {
        correct,
        ordered,
        round_trip: Distribution::of(&rtt),
        frames,
        sessions,
    })
}
