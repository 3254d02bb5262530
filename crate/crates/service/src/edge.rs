//! Per-session detection engine.
//!
//! Every frame gets an obstruction check against a snapshot of the
//! session's key-object list. The list itself, and manipulation checks, go
//! through the vision-language model only when asked. Frame responses leave
//! a session in arrival order even when later frames finish first.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::pin::pin;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use arsentry_core::gateway::{BackendCall, EndpointKind};
use arsentry_core::manipulation::{self, ManipulationResult};
use arsentry_core::obstruction::{self, ObstructionConfig, ObstructionResult, PromptVariant};
use arsentry_core::{Backends, Image, ImagePair, KeyObjectList, ServiceConfig};
use serde::{Deserialize, Serialize};
use tokio::sync::Notify;
use uuid::Uuid;

use crate::error::ServiceError;

pub const MANIPULATION_WARNING: &str = "Potential information manipulation detected";

/// What the client should do with the virtual content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum MitigationDirective {
    None,
    ReduceOpacity { target_opacity: f64 },
    Warn { message: String },
}

/// Per-session overrides accepted at creation time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionOptions {
    pub alpha: Option<f64>,
    pub box_confidence_min: Option<f64>,
    pub opacity: Option<f64>,
    /// Seeds the key-object list, e.g. from prior knowledge of the scene.
    pub key_objects: Vec<String>,
}

/// Fixed for the lifetime of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub obstruction: ObstructionConfig,
    pub opacity: f64,
    pub min_refresh_interval_ms: u64,
    pub refresh_interval_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: Uuid,
    pub config: SessionConfig,
    pub key_objects: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Frame,
    Manipulation,
}

/// Service-side timestamps of one check, in microseconds after the request
/// was received.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRecord {
    pub kind: CheckKind,
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_ready_us: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub located_us: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict_us: Option<u64>,
    pub responded_us: u64,
    pub backend_calls: Vec<BackendCall>,
}

impl LatencyRecord {
    pub fn backend_time(&self) -> Duration {
        self.backend_calls.iter().map(|c| c.duration).sum()
    }

    pub fn end_to_end(&self) -> Duration {
        Duration::from_micros(self.responded_us)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResponse {
    pub seq: u64,
    pub obstructed: bool,
    pub directive: MitigationDirective,
    pub result: ObstructionResult,
    pub latency: LatencyRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefreshResponse {
    pub key_objects: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManipulationResponse {
    pub manipulated: bool,
    pub directive: MitigationDirective,
    pub result: ManipulationResult,
    pub latency: LatencyRecord,
}

/// Mean, median and nearest-rank 95th percentile, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub count: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
}

impl Distribution {
    pub fn of(values_ms: &[f64]) -> Option<Self> {
        if values_ms.is_empty() {
            return None;
        }
        let mut v = values_ms.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
        let rank = (0.95 * n as f64).ceil() as usize;
        Some(Self {
            count: n,
            mean_ms: v.iter().sum::<f64>() / n as f64,
            median_ms: median,
            p95_ms: v[rank.clamp(1, n) - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindLatency {
    pub end_to_end: Distribution,
    /// Summed backend call time per check.
    pub backend: Distribution,
    /// End-to-end minus backend time.
    pub overhead: Distribution,
    /// Mean time per check spent in each backend endpoint.
    pub by_endpoint_ms: BTreeMap<EndpointKind, f64>,
}

impl KindLatency {
    fn of(records: &[&LatencyRecord]) -> Option<Self> {
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        let e2e: Vec<f64> = records.iter().map(|r| ms(r.end_to_end())).collect();
        let backend: Vec<f64> = records.iter().map(|r| ms(r.backend_time())).collect();
        let overhead: Vec<f64> = e2e.iter().zip(&backend).map(|(e, b)| (e - b).max(0.0)).collect();
        let mut by_endpoint: BTreeMap<EndpointKind, f64> = BTreeMap::new();
        for call in records.iter().flat_map(|r| &r.backend_calls) {
            *by_endpoint.entry(call.kind).or_default() += ms(call.duration);
        }
        for v in by_endpoint.values_mut() {
            *v /= records.len() as f64;
        }
        Some(Self {
            end_to_end: Distribution::of(&e2e)?,
            backend: Distribution::of(&backend)?,
            overhead: Distribution::of(&overhead)?,
            by_endpoint_ms: by_endpoint,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub frames: Option<KindLatency>,
    pub manipulation: Option<KindLatency>,
}

/// Releases responses in ticket order. A ticket dropped early (cancelled
/// request) releases its slot without blocking later ones.
#[derive(Default)]
struct Sequencer {
    state: Mutex<SeqState>,
    turn: Notify,
}

#[derive(Default)]
struct SeqState {
    issued: u64,
    released: u64,
    done: BTreeSet<u64>,
}

struct Ticket<'a> {
    seq: u64,
    owner: &'a Sequencer,
}

impl Drop for Ticket<'_> {
    fn drop(&mut self) {
        let mut s = self.owner.state.lock().unwrap_or_else(|e| e.into_inner());
        let SeqState { released, done, .. } = &mut *s;
        done.insert(self.seq);
        while done.remove(released) {
            *released += 1;
        }
        drop(s);
        self.owner.turn.notify_waiters();
    }
}

impl Sequencer {
    fn ticket(&self) -> Ticket<'_> {
        let mut s = self.state.lock().unwrap_or_else(|e| e.into_inner());
        let seq = s.issued;
        s.issued += 1;
        Ticket { seq, owner: self }
    }

    /// Resolves once every earlier ticket has been dropped.
    async fn wait_turn(&self, seq: u64) {
        loop {
            let mut notified = pin!(self.turn.notified());
            notified.as_mut().enable();
            if self.state.lock().unwrap_or_else(|e| e.into_inner()).released >= seq {
                return;
            }
            notified.await;
        }
    }
}

struct BusyGuard<'a>(&'a AtomicBool);

impl Drop for BusyGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

struct Session {
    id: Uuid,
    config: SessionConfig,
    key_objects: tokio::sync::RwLock<KeyObjectList>,
    last_vlm_call: Mutex<Option<Instant>>,
    manipulation_busy: AtomicBool,
    auto_refresh_running: AtomicBool,
    frames: Sequencer,
    manipulation_seq: Mutex<u64>,
    latencies: Mutex<Vec<LatencyRecord>>,
    log: Option<Mutex<File>>,
}

impl Session {
    fn log(&self, event: &str, data: serde_json::Value) {
        let Some(file) = &self.log else { return };
        let ts_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64);
        let line = serde_json::json!({ "ts_ms": ts_ms, "event": event, "data": data });
        let mut f = file.lock().unwrap_or_else(|e| e.into_inner());
        if let Err(e) = writeln!(f, "{line}") {
            log::warn!("session {}: cannot append to log: {e}", self.id);
        }
    }

    fn record(&self, r: LatencyRecord) {
        self.latencies.lock().unwrap_or_else(|e| e.into_inner()).push(r);
    }

    /// Claims the refresh slot or reports how long to wait.
    fn claim_refresh(&self) -> Result<(), ServiceError> {
        let min = Duration::from_millis(self.config.min_refresh_interval_ms);
        let mut last = self.last_vlm_call.lock().unwrap_or_else(|e| e.into_inner());
        let now = Instant::now();
        if let Some(t) = *last {
            let since = now.duration_since(t);
            if since < min {
                return Err(ServiceError::Throttled {
                    retry_after: min - since,
                });
            }
        }
        *last = Some(now);
        Ok(())
    }

    fn refresh_due(&self) -> bool {
        let Some(every) = self.config.refresh_interval_ms.map(Duration::from_millis) else {
            return false;
        };
        self.last_vlm_call
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .is_none_or(|t| t.elapsed() >= every)
    }
}

struct Inner {
    backends: Backends,
    defaults: ServiceConfig,
    sessions: RwLock<HashMap<Uuid, Arc<Session>>>,
}

/// Shared handle to the engine; cheap to clone.
#[derive(Clone)]
pub struct EdgeService {
    inner: Arc<Inner>,
}

impl EdgeService {
    pub fn new(backends: Backends, config: ServiceConfig) -> Result<Self, ServiceError> {
        config
            .validate()
            .map_err(|e| ServiceError::InvalidInput(e.to_string()))?;
        if let Some(dir) = &config.log_dir {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Self {
            inner: Arc::new(Inner {
                backends,
                defaults: config,
                sessions: RwLock::new(HashMap::new()),
            }),
        })
    }

    pub fn backends(&self) -> &Backends {
        &self.inner.backends
    }

    fn session(&self, id: &str) -> Result<Arc<Session>, ServiceError> {
        let uuid = Uuid::parse_str(id).map_err(|_| ServiceError::UnknownSession(id.to_owned()))?;
        self.inner
            .sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(&uuid)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_owned()))
    }

    fn log_path(&self, id: Uuid) -> Option<PathBuf> {
        self.inner
            .defaults
            .log_dir
            .as_ref()
            .map(|d| d.join(format!("{id}.jsonl")))
    }

    pub fn create_session(&self, opts: SessionOptions) -> Result<SessionInfo, ServiceError> {
        let d = &self.inner.defaults;
        let mut obstruction = d.obstruction;
        if let Some(a) = opts.alpha {
            obstruction.alpha = a;
        }
        if let Some(b) = opts.box_confidence_min {
            obstruction.box_confidence_min = b;
        }
        obstruction.validate()?;
        let opacity = opts.opacity.unwrap_or(d.opacity);
        if !(opacity > 0.0 && opacity < 1.0) {
            return Err(ServiceError::InvalidInput(format!("opacity must lie in (0, 1), got {opacity}")));
        }
        if opts.key_objects.iter().any(|k| k.trim().is_empty()) {
            return Err(ServiceError::InvalidInput("key objects must be non-empty".into()));
        }
        let config = SessionConfig {
            obstruction,
            opacity,
            min_refresh_interval_ms: d.min_refresh_interval.as_millis() as u64,
            refresh_interval_ms: d.refresh_interval.map(|i| i.as_millis() as u64),
        };
        let id = Uuid::new_v4();
        let log = match self.log_path(id) {
            Some(p) => Some(Mutex::new(OpenOptions::new().create(true).append(true).open(p)?)),
            None => None,
        };
        let list = KeyObjectList::from_names(&opts.key_objects);
        let info = SessionInfo {
            id,
            config: config.clone(),
            key_objects: list.entries().to_vec(),
        };
        let session = Session {
            id,
            config,
            key_objects: tokio::sync::RwLock::new(list),
            last_vlm_call: Mutex::new(None),
            manipulation_busy: AtomicBool::new(false),
            auto_refresh_running: AtomicBool::new(false),
            frames: Sequencer::default(),
            manipulation_seq: Mutex::new(0),
            latencies: Mutex::new(Vec::new()),
            log,
        };
        session.log("session_created", serde_json::to_value(&info).expect("serializable"));
        self.inner
            .sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id, Arc::new(session));
        log::info!("session {id} created");
        Ok(info)
    }

    pub fn close_session(&self, id: &str) -> Result<(), ServiceError> {
        let session = self.session(id)?;
        session.log("session_closed", serde_json::Value::Null);
        self.inner
            .sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .remove(&session.id);
        Ok(())
    }

    pub async fn session_info(&self, id: &str) -> Result<SessionInfo, ServiceError> {
        let s = self.session(id)?;
        let key_objects = s.key_objects.read().await.entries().to_vec();
        Ok(SessionInfo {
            id: s.id,
            config: s.config.clone(),
            key_objects,
        })
    }

    /// Obstruction check for one frame. Never calls the vision-language
    /// model itself; with periodic refresh enabled it may start one in the
    /// background.
    pub async fn handle_frame(&self, id: &str, raw: Image, augmented: Image) -> Result<FrameResponse, ServiceError> {
        let received = Instant::now();
        let session = self.session(id)?;
        let ticket = session.frames.ticket();
        let outcome = self.run_frame(&session, raw, augmented, received).await;
        session.frames.wait_turn(ticket.seq).await;
        let responded_us = received.elapsed().as_micros() as u64;
        let seq = ticket.seq;
        match outcome {
            Ok((result, started_us)) => {
                let t = &result.timings;
                let mask_ready = started_us + t.mask_extraction.as_micros() as u64;
                let located = mask_ready + t.locate.as_micros() as u64;
                let latency = LatencyRecord {
                    kind: CheckKind::Frame,
                    seq,
                    mask_ready_us: Some(mask_ready),
                    located_us: Some(located),
                    verdict_us: Some(located + t.verdict.as_micros() as u64),
                    responded_us,
                    backend_calls: t.backend_calls.clone(),
                };
                let directive = if result.obstructed {
                    MitigationDirective::ReduceOpacity {
                        target_opacity: session.config.opacity,
                    }
                } else {
                    MitigationDirective::None
                };
                session.record(latency.clone());
                session.log(
                    "frame",
                    serde_json::json!({
                        "seq": seq,
                        "obstructed": result.obstructed,
                        "per_object": result.per_object,
                        "directive": directive,
                        "latency": latency,
                    }),
                );
                drop(ticket);
                Ok(FrameResponse {
                    seq,
                    obstructed: result.obstructed,
                    directive,
                    result,
                    latency,
                })
            }
            Err(e) => {
                session.log("frame_error", serde_json::json!({ "seq": seq, "error": e.to_string() }));
                drop(ticket);
                Err(e)
            }
        }
    }

    async fn run_frame(
        &self,
        session: &Arc<Session>,
        raw: Image,
        augmented: Image,
        received: Instant,
    ) -> Result<(ObstructionResult, u64), ServiceError> {
        let pair = ImagePair::new(raw, augmented)?;
        if session.refresh_due() {
            self.spawn_auto_refresh(session, pair.raw().clone());
        }
        let snapshot = session.key_objects.read().await.clone();
        let started_us = received.elapsed().as_micros() as u64;
        let result =
            obstruction::detect_obstruction(&pair, &snapshot, &self.inner.backends, &session.config.obstruction)
                .await?;
        Ok((result, started_us))
    }

    fn spawn_auto_refresh(&self, session: &Arc<Session>, raw: Image) {
        if session.auto_refresh_running.swap(true, Ordering::AcqRel) {
            return;
        }
        let this = self.clone();
        let session = session.clone();
        tokio::spawn(async move {
            let _running = BusyGuard(&session.auto_refresh_running);
            match this.refresh(&session, &raw, &PromptVariant::Standard).await {
                Ok(_) | Err(ServiceError::Throttled { .. }) => {}
                Err(e) => log::warn!("session {}: periodic refresh failed: {e}", session.id),
            }
        });
    }

    async fn refresh(
        &self,
        session: &Session,
        raw: &Image,
        variant: &PromptVariant,
    ) -> Result<RefreshResponse, ServiceError> {
        session.claim_refresh()?;
        let current = session.key_objects.read().await.clone();
        let outcome = obstruction::refresh_keyobjects(&current, raw, variant, &self.inner.backends.vlm).await;
        let updated = match outcome {
            Ok(u) => u,
            Err(e) => {
                let e = ServiceError::from(e);
                session.log("refresh_error", serde_json::json!({ "variant": variant.name(), "error": e.to_string() }));
                return Err(e);
            }
        };
        let mut list = session.key_objects.write().await;
        list.merge(updated.entries().iter(), SystemTime::now());
        let key_objects = list.entries().to_vec();
        drop(list);
        session.log(
            "refresh",
            serde_json::json!({ "variant": variant.name(), "key_objects": key_objects }),
        );
        Ok(RefreshResponse { key_objects })
    }

    /// Asks the vision-language model for key objects in `raw` and merges
    /// them into the session's list. At most one call per
    /// `min_refresh_interval`.
    pub async fn trigger_keyobject_refresh(
        &self,
        id: &str,
        raw: Image,
        variant: PromptVariant,
    ) -> Result<RefreshResponse, ServiceError> {
        let session = self.session(id)?;
        self.refresh(&session, &raw, &variant).await
    }

    /// One manipulation check at a time per session; a second concurrent
    /// request is rejected with [`ServiceError::Busy`].
    pub async fn handle_manipulation_check(
        &self,
        id: &str,
        raw: Image,
        augmented: Image,
    ) -> Result<ManipulationResponse, ServiceError> {
        let received = Instant::now();
        let session = self.session(id)?;
        if session
            .manipulation_busy
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .is_err()
        {
            return Err(ServiceError::Busy);
        }
        let _busy = BusyGuard(&session.manipulation_busy);
        let seq = {
            let mut s = session.manipulation_seq.lock().unwrap_or_else(|e| e.into_inner());
            *s += 1;
            *s - 1
        };
        let pair = ImagePair::new(raw, augmented)?;
        let start = Instant::now();
        let transcript = self
            .inner
            .backends
            .vlm
            .vlm_complete(&[pair.raw(), pair.augmented()], manipulation::build_manipulation_prompt())
            .await;
        let call = BackendCall {
            kind: EndpointKind::Vlm,
            duration: start.elapsed(),
        };
        let result = match transcript.map_err(ServiceError::from).and_then(|t| {
            manipulation::interpret_transcript(t).map_err(ServiceError::from)
        }) {
            Ok(r) => r,
            Err(e) => {
                session.log("manipulation_error", serde_json::json!({ "seq": seq, "error": e.to_string() }));
                return Err(e);
            }
        };
        let directive = if result.manipulated {
            MitigationDirective::Warn {
                message: MANIPULATION_WARNING.into(),
            }
        } else {
            MitigationDirective::None
        };
        let latency = LatencyRecord {
            kind: CheckKind::Manipulation,
            seq,
            mask_ready_us: None,
            located_us: None,
            verdict_us: None,
            responded_us: received.elapsed().as_micros() as u64,
            backend_calls: vec![call],
        };
        session.record(latency.clone());
        session.log(
            "manipulation",
            serde_json::json!({
                "seq": seq,
                "manipulated": result.manipulated,
                "factors": result.factors,
                "transcript": result.transcript,
                "directive": directive,
                "latency": latency,
            }),
        );
        Ok(ManipulationResponse {
            manipulated: result.manipulated,
            directive,
            result,
            latency,
        })
    }

    pub fn latency_records(&self, id: &str) -> Result<Vec<LatencyRecord>, ServiceError> {
        let s = self.session(id)?;
        let records = s.latencies.lock().unwrap_or_else(|e| e.into_inner()).clone();
        Ok(records)
    }

    pub fn latency_stats(&self, id: &str) -> Result<LatencySummary, ServiceError> {
        let records = self.latency_records(id)?;
        let of = |kind: CheckKind| {
            let rs: Vec<&LatencyRecord> = records.iter().filter(|r| r.kind == kind).collect();
            KindLatency::of(&rs)
        };
        let summary = LatencySummary {
            frames: of(CheckKind::Frame),
            manipulation: of(CheckKind::Manipulation),
        };
        if summary.frames.is_none() && summary.manipulation.is_none() {
            return Err(ServiceError::NoData);
        }
        Ok(summary)
    }
}
