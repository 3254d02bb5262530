#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use arsentry_core::eval::synth::{SynthOptions, generate_manipulation_dataset, generate_obstruction_dataset};
use arsentry_core::eval::{Dataset, TaskKind, ground_truth_backend, load_dataset};
use arsentry_core::gateway::{EndpointKind, Request, Response, ScriptedBackend, Transport};
use arsentry_core::BackendError;
use async_trait::async_trait;

pub fn obstruction_dataset(dir: &Path, n: usize, seed: u64) -> Dataset {
    generate_obstruction_dataset(dir, n, seed, &SynthOptions::default()).unwrap();
    load_dataset(dir, TaskKind::Obstruction).unwrap()
}

pub fn manipulation_dataset(dir: &Path, n: usize, seed: u64) -> Dataset {
    generate_manipulation_dataset(dir, n, seed, &SynthOptions::default()).unwrap();
    load_dataset(dir, TaskKind::Manipulation).unwrap()
}

/// Counts requests per endpoint kind before forwarding them.
pub struct Counting<T> {
    pub inner: T,
    pub vlm: AtomicU64,
    pub detect: AtomicU64,
    pub segment: AtomicU64,
}

impl<T> Counting<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            vlm: AtomicU64::new(0),
            detect: AtomicU64::new(0),
            segment: AtomicU64::new(0),
        }
    }

    pub fn count(&self, kind: EndpointKind) -> u64 {
        match kind {
            EndpointKind::Vlm => &self.vlm,
            EndpointKind::Detect => &self.detect,
            EndpointKind::Segment => &self.segment,
        }
        .load(Ordering::SeqCst)
    }
}

#[async_trait]
impl<T: Transport> Transport for Counting<T> {
    async fn exchange(&self, request: &Request) -> Result<Response, BackendError> {
        match request.kind() {
            EndpointKind::Vlm => &self.vlm,
            EndpointKind::Detect => &self.detect,
            EndpointKind::Segment => &self.segment,
        }
        .fetch_add(1, Ordering::SeqCst);
        self.inner.exchange(request).await
    }
}

pub fn oracle(dataset: &Dataset, delay: Option<Duration>) -> Arc<Counting<ScriptedBackend>> {
    let mut b = ground_truth_backend(dataset).unwrap();
    if let Some(d) = delay {
        b = b.with_delay(d);
    }
    Arc::new(Counting::new(b))
}

pub async fn spawn(router: axum::Router) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });
    addr
}
