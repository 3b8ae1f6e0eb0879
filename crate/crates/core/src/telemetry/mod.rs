//! Fire-and-forget telemetry: anonymization, ingestion, storage and
//! aggregation.

pub mod aggregate;
pub mod alias;
pub mod queue;
pub mod store;

use std::sync::Mutex;

pub use aggregate::{aggregate, AggregateSummary, AliasFeatures, CodeStats, ModuleSummary};
pub use alias::{make_alias, AliasError, Anonymizer};
pub use queue::{IngestOutcome, IngestQueue, QueueStats, RetryPolicy};
pub use store::{EventStore, FaultyStore, JsonlStore, MemoryStore, StoreError, StoreSnapshot};

use crate::model::{EventPayload, StudentAlias, TelemetryEvent, TimestampMs};

/// Where components hand off events. Implementations must return promptly
/// and never fail the caller.
pub trait EventSink: Send + Sync {
    fn emit(&self, event: TelemetryEvent);
}

/// Discards everything.
pub struct NullSink;

impl EventSink for NullSink {
    fn emit(&self, _event: TelemetryEvent) {}
}

/// Keeps emitted events in memory, for tests.
#[derive(Default)]
pub struct RecordingSink {
    events: Mutex<Vec<TelemetryEvent>>,
}

impl RecordingSink {
    pub fn events(&self) -> Vec<TelemetryEvent> {
        self.events.lock().expect("sink lock").clone()
    }
}

impl EventSink for RecordingSink {
    fn emit(&self, event: TelemetryEvent) {
        self.events.lock().expect("sink lock").push(event);
    }
}

impl<S: EventSink + ?Sized> EventSink for std::sync::Arc<S> {
    fn emit(&self, event: TelemetryEvent) {
        (**self).emit(event)
    }
}

pub fn now_ms() -> TimestampMs {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as TimestampMs)
        .unwrap_or(0)
}

pub fn new_event(alias: StudentAlias, module_id: u8, payload: EventPayload) -> TelemetryEvent {
    TelemetryEvent { event_id: uuid::Uuid::new_v4().to_string(), alias, module_id, at: now_ms(), payload }
}
