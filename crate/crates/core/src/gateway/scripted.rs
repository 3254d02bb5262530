//! Fixture-backed transports: deterministic replay and capture.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Transport;
use super::wire::{EndpointKind, ErrorBody, Request, Response};
use crate::error::BackendError;

/// Recorded outcome of one backend exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok(Response),
    Error(ErrorBody),
}

impl Outcome {
    fn into_result(self) -> Result<Response, BackendError> {
        match self {
            Outcome::Ok(r) => Ok(r),
            Outcome::Error(e) => Err(e.into_error()),
        }
    }
}

/// One fixture file: `<fingerprint>.json` in a fixture directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub fingerprint: String,
    pub request: Request,
    pub outcome: Outcome,
}

/// Replays canned responses keyed by request fingerprint.
///
/// In strict mode an unknown fingerprint is a [`BackendError::FixtureMiss`];
/// otherwise the per-kind default (if any) is returned.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    fixtures: HashMap<String, Outcome>,
    defaults: BTreeMap<EndpointKind, Outcome>,
    strict: bool,
    delay: Option<Duration>,
    calls: AtomicU64,
}

impl ScriptedBackend {
    pub fn strict() -> Self {
        Self {
            strict: true,
            ..Self::default()
        }
    }

    pub fn lenient() -> Self {
        Self::default()
    }

    /// Sleeps this long before answering each request.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = Some(delay);
        self
    }

    pub fn with_default(mut self, kind: EndpointKind, outcome: Outcome) -> Self {
        self.defaults.insert(kind, outcome);
        self
    }

    pub fn insert(&mut self, request: &Request, response: Response) {
        self.fixtures
            .insert(request.fingerprint(), Outcome::Ok(response));
    }

    pub fn insert_error(&mut self, request: &Request, error: &BackendError) {
        self.fixtures
            .insert(request.fingerprint(), Outcome::Error(error.into()));
    }

    pub fn insert_fixture(&mut self, fixture: Fixture) {
        self.fixtures.insert(fixture.fingerprint, fixture.outcome);
    }

    pub fn len(&self) -> usize {
        self.fixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    /// Loads every `*.json` fixture in `dir` into a strict backend.
    pub fn load_dir(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        let mut backend = Self::strict();
        for fixture in FixtureStore::new(dir.as_ref()).load_all()? {
            backend.insert_fixture(fixture);
        }
        Ok(backend)
    }

    fn lookup(&self, request: &Request) -> Result<Response, BackendError> {
        let fp = request.fingerprint();
        if let Some(outcome) = self.fixtures.get(&fp) {
            return outcome.clone().into_result();
        }
        match self.defaults.get(&request.kind()) {
            Some(outcome) if !self.strict => outcome.clone().into_result(),
            _ => Err(BackendError::FixtureMiss(fp)),
        }
    }
}

#[async_trait]
impl Transport for ScriptedBackend {
    async fn exchange(&self, request: &Request) -> Result<Response, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        if let Some(d) = self.delay {
            tokio::time::sleep(d).await;
        }
        self.lookup(request)
    }
}

/// A directory of fixture files. Writes are serialized.
#[derive(Debug)]
pub struct FixtureStore {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl FixtureStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            write_lock: Mutex::new(()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, fingerprint: &str) -> PathBuf {
        self.dir.join(format!("{fingerprint}.json"))
    }

    pub fn write(&self, fixture: &Fixture) -> std::io::Result<()> {
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        std::fs::create_dir_all(&self.dir)?;
        let text = serde_json::to_string_pretty(fixture).map_err(std::io::Error::other)?;
        std::fs::write(self.path_for(&fixture.fingerprint), text)
    }

    /// All fixtures, sorted by fingerprint.
    pub fn load_all(&self) -> std::io::Result<Vec<Fixture>> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let text = std::fs::read_to_string(&path)?;
                let fixture: Fixture = serde_json::from_str(&text).map_err(|e| {
                    std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        format!("{}: {e}", path.display()),
                    )
                })?;
                out.push(fixture);
            }
        }
        out.sort_by(|a, b| a.fingerprint.cmp(&b.fingerprint));
        Ok(out)
    }
}

/// Wraps a live transport and writes every exchange to a fixture store.
pub struct RecordingTransport<T> {
    inner: T,
    store: FixtureStore,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T, store: FixtureStore) -> Self {
        Self { inner, store }
    }
}

#[async_trait]
impl<T: Transport> Transport for RecordingTransport<T> {
    async fn exchange(&self, request: &Request) -> Result<Response, BackendError> {
        let result = self.inner.exchange(request).await;
        let outcome = match &result {
            Ok(r) => Outcome::Ok(r.clone()),
            Err(e) => Outcome::Error(e.into()),
        };
        let fixture = Fixture {
            fingerprint: request.fingerprint(),
            request: request.clone(),
            outcome,
        };
        if let Err(e) = self.store.write(&fixture) {
            log::warn!("failed to record fixture {}: {e}", fixture.fingerprint);
        }
        result
    }
}

/// Order-independent digest of a set of fingerprints.
pub fn fingerprint_set_digest<'a>(fingerprints: impl IntoIterator<Item = &'a String>) -> String {
    let mut sorted: Vec<&String> = fingerprints.into_iter().collect();
    sorted.sort();
    sorted.dedup();
    let mut hasher = Sha256::new();
    for fp in sorted {
        hasher.update(fp.as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::wire::{VlmRequest, VlmResponse};

    fn vlm_req(prompt: &str) -> Request {
        Request::Vlm(VlmRequest {
            prompt: prompt.into(),
            images: vec!["aGk=".into()],
        })
    }

    fn text(t: &str) -> Response {
        Response::Vlm(VlmResponse { text: t.into() })
    }

    #[tokio::test]
    async fn strict_miss_names_fingerprint() {
        let backend = ScriptedBackend::strict();
        let req = vlm_req("p");
        match backend.exchange(&req).await {
            Err(BackendError::FixtureMiss(fp)) => assert_eq!(fp, req.fingerprint()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[tokio::test]
    async fn lenient_falls_back_to_default() {
        let backend = ScriptedBackend::lenient()
            .with_default(EndpointKind::Vlm, Outcome::Ok(text("nothing")));
        assert_eq!(backend.exchange(&vlm_req("q")).await.unwrap(), text("nothing"));
    }

    #[tokio::test]
    async fn replay_is_repeatable_and_survives_disk() {
        let dir = tempfile::tempdir().unwrap();
        let mut live = ScriptedBackend::strict();
        live.insert(&vlm_req("a"), text("stop sign"));
        live.insert_error(&vlm_req("b"), &BackendError::Unavailable("x".into()));
        let recorder = RecordingTransport::new(live, FixtureStore::new(dir.path()));
        let first = recorder.exchange(&vlm_req("a")).await.unwrap();
        assert!(recorder.exchange(&vlm_req("b")).await.is_err());

        let replay = ScriptedBackend::load_dir(dir.path()).unwrap();
        assert_eq!(replay.len(), 2);
        assert_eq!(replay.exchange(&vlm_req("a")).await.unwrap(), first);
        assert_eq!(replay.exchange(&vlm_req("a")).await.unwrap(), first);
        assert!(matches!(
            replay.exchange(&vlm_req("b")).await,
            Err(BackendError::Unavailable(_))
        ));
    }

    #[test]
    fn digest_is_order_independent() {
        let a = ["x".to_string(), "y".to_string()];
        let b = ["y".to_string(), "x".to_string(), "x".to_string()];
        assert_eq!(fingerprint_set_digest(&a), fingerprint_set_digest(&b));
    }
}
