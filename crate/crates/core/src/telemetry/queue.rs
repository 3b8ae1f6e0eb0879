//! Bounded fire-and-forget ingestion queue with a single drain worker.
//!
//! Producers call [`IngestQueue::ingest`], which takes a short lock, appends
//! and returns. The drain worker copies a batch from the front, writes it to
//! the store with retries, and only then removes it from the buffer, so an
//! unavailable store never loses buffered events. When the buffer is full the
//! oldest unwritten event is dropped and counted.

use std::collections::{HashSet, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use tokio::sync::Notify;
use tokio::task::JoinHandle;

use super::store::EventStore;
use super::EventSink;
use crate::model::TelemetryEvent;

pub const DEFAULT_CAPACITY: usize = 10_000;
const BATCH: usize = 256;

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 3, backoff: Duration::from_millis(50) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestOutcome {
    Queued,
    /// The event id was already accepted; nothing was enqueued.
    Duplicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub struct QueueStats {
    pub buffered: usize,
    pub written: u64,
    pub dropped: u64,
    pub duplicates: u64,
    pub failed_writes: u64,
}

struct State {
    buf: VecDeque<(u64, TelemetryEvent)>,
    next_seq: u64,
    seen: HashSet<String>,
}

struct Shared {
    state: Mutex<State>,
    notify: Notify,
    capacity: usize,
    written: AtomicU64,
    dropped: AtomicU64,
    duplicates: AtomicU64,
    failed_writes: AtomicU64,
}

#[derive(Clone)]
pub struct IngestQueue {
    shared: Arc<Shared>,
}

impl IngestQueue {
    /// Creates the queue and spawns its drain worker on the current runtime.
    pub fn start<S>(store: S, capacity: usize, retry: RetryPolicy) -> (Self, JoinHandle<()>)
    where
        S: EventStore + 'static,
    {
        let shared = Arc::new(Shared {
            state: Mutex::new(State { buf: VecDeque::new(), next_seq: 0, seen: HashSet::new() }),
            notify: Notify::new(),
            capacity: capacity.max(1),
            written: AtomicU64::new(0),
            dropped: AtomicU64::new(0),
            duplicates: AtomicU64::new(0),
            failed_writes: AtomicU64::new(0),
        });
        let worker = tokio::spawn(drain(Arc::clone(&shared), store, retry));
        (Self { shared }, worker)
    }

    pub fn ingest(&self, event: TelemetryEvent) -> IngestOutcome {
        let mut state = self.shared.state.lock().expect("queue lock");
        if !state.seen.insert(event.event_id.clone()) {
            self.shared.duplicates.fetch_add(1, Ordering::Relaxed);
            return IngestOutcome::Duplicate;
        }
        if state.buf.len() >= self.shared.capacity {
            if let Some((_, old)) = state.buf.pop_front() {
                // a later redelivery of a dropped event should be accepted
                state.seen.remove(&old.event_id);
                self.shared.dropped.fetch_add(1, Ordering::Relaxed);
            }
        }
        let seq = state.next_seq;
        state.next_seq += 1;
        state.buf.push_back((seq, event));
        drop(state);
        self.shared.notify.notify_one();
        IngestOutcome::Queued
    }

    pub fn stats(&self) -> QueueStats {
        QueueStats {
            buffered: self.shared.state.lock().expect("queue lock").buf.len(),
            written: self.shared.written.load(Ordering::Relaxed),
            dropped: self.shared.dropped.load(Ordering::Relaxed),
            duplicates: self.shared.duplicates.load(Ordering::Relaxed),
            failed_writes: self.shared.failed_writes.load(Ordering::Relaxed),
        }
    }

    /// Waits until the buffer is empty or `timeout` elapses. Returns whether
    /// everything was written.
    pub async fn flush(&self, timeout: Duration) -> bool {
        let deadline = tokio::time::Instant::now() + timeout;
        loop {
            if self.shared.state.lock().expect("queue lock").buf.is_empty() {
                return true;
            }
            if tokio::time::Instant::now() >= deadline {
                return false;
            }
            self.shared.notify.notify_one();
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
    }
}

impl EventSink for IngestQueue {
    fn emit(&self, event: TelemetryEvent) {
        self.ingest(event);
    }
}

async fn drain<S: EventStore>(shared: Arc<Shared>, store: S, retry: RetryPolicy) {
    loop {
        let batch: Vec<(u64, TelemetryEvent)> = {
            let state = shared.state.lock().expect("queue lock");
            state.buf.iter().take(BATCH).cloned().collect()
        };
        if batch.is_empty() {
            shared.notify.notified().await;
            continue;
        }
        let last_seq = batch.last().map(|(s, _)| *s).expect("non-empty batch");
        let events: Vec<TelemetryEvent> = batch.into_iter().map(|(_, e)| e).collect();

        let mut attempt = 0;
        let ok = loop {
            match store.append(&events).await {
                Ok(()) => break true,
                Err(err) => {
                    shared.failed_writes.fetch_add(1, Ordering::Relaxed);
                    tracing::debug!(error = %err, attempt, "telemetry store append failed");
                    if attempt >= retry.max_retries {
                        break false;
                    }
                    attempt += 1;
                    tokio::time::sleep(retry.backoff).await;
                }
            }
        };
        if ok {
            let mut state = shared.state.lock().expect("queue lock");
            let mut removed = 0;
            while state.buf.front().is_some_and(|(seq, _)| *seq <= last_seq) {
                state.buf.pop_front();
                removed += 1;
            }
            shared.written.fetch_add(removed, Ordering::Relaxed);
        } else {
            tokio::time::sleep(retry.backoff).await;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EventPayload, SessionAction, SessionPayload, StudentAlias};
    use crate::telemetry::store::{FaultyStore, MemoryStore};
    use std::time::Instant;

    fn event(i: usize) -> TelemetryEvent {
        TelemetryEvent {
            event_id: format!("ev-{i}"),
            alias: StudentAlias::from_token("0123456789abcdef").unwrap(),
            module_id: 1,
            at: i as i64,
            payload: EventPayload::Session(SessionPayload { action: SessionAction::Start }),
        }
    }

    #[tokio::test]
    async fn healthy_sink_receives_events() {
        let store = Arc::new(MemoryStore::new());
        let (q, _w) = IngestQueue::start(Arc::clone(&store), 100, RetryPolicy::default());
        assert_eq!(q.ingest(event(1)), IngestOutcome::Queued);
        assert!(q.flush(Duration::from_secs(2)).await);
        assert_eq!(store.len(), 1);
    }

    #[tokio::test]
    async fn duplicate_ids_stored_once() {
        let store = Arc::new(MemoryStore::new());
        let (q, _w) = IngestQueue::start(Arc::clone(&store), 100, RetryPolicy::default());
        q.ingest(event(7));
        assert_eq!(q.ingest(event(7)), IngestOutcome::Duplicate);
        assert!(q.flush(Duration::from_secs(2)).await);
        assert_eq!(store.len(), 1);
        assert_eq!(q.stats().duplicates, 1);
    }

    #[tokio::test]
    async fn overflow_with_sink_down_drops_oldest() {
        let store = Arc::new(FaultyStore::new(MemoryStore::new(), true));
        let retry = RetryPolicy { max_retries: 1, backoff: Duration::from_millis(5) };
        let (q, _w) = IngestQueue::start(Arc::clone(&store), 500, retry);
        let started = Instant::now();
        for i in 0..1000 {
            q.ingest(event(i));
        }
        // producers never wait on the sink
        assert!(started.elapsed() < Duration::from_millis(200));
        let stats = q.stats();
        assert_eq!(stats.buffered, 500);
        assert_eq!(stats.dropped, 500);

        store.set_failing(false);
        assert!(q.flush(Duration::from_secs(5)).await);
        let snap = store.snapshot().await.unwrap();
        assert_eq!(snap.events.len(), 500);
        // the newest 500 survived
        assert_eq!(snap.events[0].event_id, "ev-500");
    }

    #[tokio::test]
    async fn dropped_event_can_be_redelivered() {
        let store = Arc::new(FaultyStore::new(MemoryStore::new(), true));
        let (q, _w) = IngestQueue::start(Arc::clone(&store), 1, RetryPolicy::default());
        q.ingest(event(1));
        q.ingest(event(2));
        assert_eq!(q.ingest(event(1)), IngestOutcome::Queued);
    }
}
