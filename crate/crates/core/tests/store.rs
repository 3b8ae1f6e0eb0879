use std::io::Write;

use tutor_core::model::{ChatPayload, EventPayload, QuestionCategory, StudentAlias, TelemetryEvent};
use tutor_core::telemetry::store::{EventStore, JsonlStore};

fn chat(id: &str) -> TelemetryEvent {
    TelemetryEvent {
        event_id: id.into(),
        alias: StudentAlias::from_token("0123456789abcdef").unwrap(),
        module_id: 2,
        at: 1_756_112_400_000,
        payload: EventPayload::Chat(ChatPayload { question_category: QuestionCategory::Implementation }),
    }
}

#[tokio::test]
async fn appends_survive_reopen_and_stay_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let store = JsonlStore::open(&path).await.unwrap();
    store.append(&[chat("a"), chat("b"), chat("a")]).await.unwrap();
    store.append(&[chat("b")]).await.unwrap();
    drop(store);

    let reopened = JsonlStore::open(&path).await.unwrap();
    reopened.append(&[chat("a"), chat("c")]).await.unwrap();
    let snap = reopened.snapshot().await.unwrap();
    let ids: Vec<_> = snap.events.iter().map(|e| e.event_id.as_str()).collect();
    assert_eq!(ids, ["a", "b", "c"]);
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 3);
}

#[tokio::test]
async fn corrupt_lines_are_counted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "{}", chat("a").to_json_line()).unwrap();
    writeln!(f, "{{\"event_id\": \"torn").unwrap();
    drop(f);
    let snap = JsonlStore::open(&path).await.unwrap().snapshot().await.unwrap();
    assert_eq!(snap.events.len(), 1);
    assert_eq!(snap.corrupt_lines, 1);
}

#[tokio::test]
async fn missing_file_is_an_empty_store() {
    let dir = tempfile::tempdir().unwrap();
    let snap = JsonlStore::open(dir.path().join("none.jsonl")).await.unwrap().snapshot().await.unwrap();
    assert!(snap.events.is_empty());
}
