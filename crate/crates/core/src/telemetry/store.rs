//! Durable event stores.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;

use async_trait::async_trait;
use thiserror::Error;
use tokio::io::AsyncWriteExt;

use crate::model::TelemetryEvent;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("store unavailable: {0}")]
    Unavailable(String),
}

/// Parsed contents of a store. Unparseable lines are counted, not fatal.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StoreSnapshot {
    pub events: Vec<TelemetryEvent>,
    pub corrupt_lines: u64,
}

impl StoreSnapshot {
    /// Parses JSON Lines text. Later duplicates of an event id are ignored.
    pub fn from_jsonl(text: &str) -> Self {
        let mut seen = HashSet::new();
        let mut snap = StoreSnapshot::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match serde_json::from_str::<TelemetryEvent>(line) {
                Ok(ev) => {
                    if seen.insert(ev.event_id.clone()) {
                        snap.events.push(ev);
                    }
                }
                Err(_) => snap.corrupt_lines += 1,
            }
        }
        snap
    }
}

/// Append-only event sink. Appends are idempotent on `event_id`.
#[async_trait]
pub trait EventStore: Send + Sync {
    async fn append(&self, events: &[TelemetryEvent]) -> Result<(), StoreError>;
    async fn snapshot(&self) -> Result<StoreSnapshot, StoreError>;
}

#[async_trait]
impl<S: EventStore + ?Sized> EventStore for std::sync::Arc<S> {
    async fn append(&self, events: &[TelemetryEvent]) -> Result<(), StoreError> {
        (**self).append(events).await
    }

    async fn snapshot(&self) -> Result<StoreSnapshot, StoreError> {
        (**self).snapshot().await
    }
}

/// `events.jsonl` on local disk.
pub struct JsonlStore {
    path: PathBuf,
    ids: tokio::sync::Mutex<HashSet<String>>,
}

impl JsonlStore {
    pub async fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let ids = match tokio::fs::read_to_string(&path).await {
            Ok(text) => StoreSnapshot::from_jsonl(&text).events.into_iter().map(|e| e.event_id).collect(),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => HashSet::new(),
            Err(e) => return Err(e.into()),
        };
        Ok(Self { path, ids: tokio::sync::Mutex::new(ids) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

#[async_trait]
impl EventStore for JsonlStore {
    async fn append(&self, events: &[TelemetryEvent]) -> Result<(), StoreError> {
        let mut ids = self.ids.lock().await;
        let mut buf = String::new();
        let mut fresh = Vec::new();
        for ev in events {
            if !ids.contains(&ev.event_id) && !fresh.contains(&&ev.event_id) {
                buf.push_str(&ev.to_json_line());
                buf.push('\n');
                fresh.push(&ev.event_id);
            }
        }
        if buf.is_empty() {
            return Ok(());
        }
        let mut file = tokio::fs::OpenOptions::new().create(true).append(true).open(&self.path).await?;
        file.write_all(buf.as_bytes()).await?;
        file.flush().await?;
        ids.extend(fresh.into_iter().cloned());
        Ok(())
    }

    async fn snapshot(&self) -> Result<StoreSnapshot, StoreError> {
        let _guard = self.ids.lock().await;
        match tokio::fs::read_to_string(&self.path).await {
            Ok(text) => Ok(StoreSnapshot::from_jsonl(&text)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(StoreSnapshot::default()),
            Err(e) => Err(e.into()),
        }
    }
}

#[derive(Default)]
pub struct MemoryStore {
    events: Mutex<Vec<TelemetryEvent>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.events.lock().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[async_trait]
impl EventStore for MemoryStore {
    async fn append(&self, events: &[TelemetryEvent]) -> Result<(), StoreError> {
        let mut stored = self.events.lock().expect("store lock");
        for ev in events {
            if !stored.iter().any(|e| e.event_id == ev.event_id) {
                stored.push(ev.clone());
            }
        }
        Ok(())
    }

    async fn snapshot(&self) -> Result<StoreSnapshot, StoreError> {
        Ok(StoreSnapshot { events: self.events.lock().expect("store lock").clone(), corrupt_lines: 0 })
    }
}

/// Wraps a store with a switch that makes every append fail. Used for fault
/// injection in tests and the load harness.
pub struct FaultyStore<S> {
    inner: S,
    failing: AtomicBool,
    failed_appends: AtomicU64,
}

impl<S> FaultyStore<S> {
    pub fn new(inner: S, failing: bool) -> Self {
        Self { inner, failing: AtomicBool::new(failing), failed_appends: AtomicU64::new(0) }
    }

    pub fn set_failing(&self, failing: bool) {
        self.failing.store(failing, Ordering::SeqCst);
    }

    pub fn failed_appends(&self) -> u64 {
        self.failed_appends.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }
}

#[async_trait]
impl<S: EventStore> EventStore for FaultyStore<S> {
    async fn append(&self, events: &[TelemetryEvent]) -> Result<(), StoreError> {
        if self.failing.load(Ordering::SeqCst) {
            self.failed_appends.fetch_add(1, Ordering::SeqCst);
            return Err(StoreError::Unavailable("injected sink failure".into()));
        }
        self.inner.append(events).await
    }

    async fn snapshot(&self) -> Result<StoreSnapshot, StoreError> {
        self.inner.snapshot().await
    }
}
