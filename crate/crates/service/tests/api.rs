mod common;

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use common::*;
use serde_json::{json, Value};
use tutor_core::model::{EventCategory, EventPayload};
use tutor_core::provider::{MatchRule, ScriptedBehavior, ScriptedProvider, SchemaTag};
use tutor_core::sandbox::{ExecutionResult, Sandbox, SandboxError};
use tutor_core::telemetry::store::EventStore;

const RAW: &str = "s1024-maria";

async fn stored(server: &TestServer) -> Vec<tutor_core::model::TelemetryEvent> {
    assert!(server.state.flush_events(Duration::from_secs(2)).await);
    server.store.snapshot().await.unwrap().events
}

#[tokio::test]
async fn sessions_alias_the_raw_reference() {
    let server = TestServer::start().await;
    let (status, a) = server.post("/sessions", &json!({"raw_student_ref": RAW, "module_id": 1})).await;
    assert_eq!(status, 200);
    let (_, b) = server.post("/sessions", &json!({"raw_student_ref": RAW, "module_id": 2})).await;
    assert_ne!(a["session_id"], b["session_id"]);
    assert_eq!(a["alias"], b["alias"]);
    assert!(!a.to_string().contains(RAW));

    let events = stored(&server).await;
    assert_eq!(events.len(), 2);
    assert!(events.iter().all(|e| e.category() == EventCategory::SessionManagement));
}

#[tokio::test]
async fn session_for_unknown_module_is_bad_request() {
    let server = TestServer::start().await;
    let (status, body) = server.post("/sessions", &json!({"raw_student_ref": RAW, "module_id": 9})).await;
    assert_eq!(status, 400);
    assert_eq!(body["code"], "bad_request");
    assert_eq!(body["retryable"], false);
    // a malformed body must not echo the raw reference back
    let (status, body) = server.post("/sessions", &json!({"raw_student_ref": RAW, "module_id": RAW})).await;
    assert_eq!(status, 400);
    assert!(!body.to_string().contains(RAW));
}

#[tokio::test]
async fn worked_example_gets_three_ordered_sections() {
    let server = TestServer::start().await;
    let session = server.session(RAW, 1).await;
    let code = solution("m1-c3", "runtime_error");
    let (_, run) = server.post("/execute", &json!({"session_id": session, "source": code["source"]})).await;
    assert_eq!(run["exit_ok"], false);
    assert_eq!(run["error_category"], "api_misuse");

    let (status, body) = server
        .post(
            "/chat",
            &json!({
                "session_id": session,
                "text": "Why do I get QiskitError: 'other is not a number' when I apply Z to my |1> state?",
                "code_context": code["source"],
                "execution_error": run["stderr"],
            }),
        )
        .await;
    assert_eq!(status, 200, "{body}");
    let kinds: Vec<&str> = body["sections"].as_array().unwrap().iter().map(|s| s["source_kind"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["code", "guidance", "video"]);
    assert_eq!(body["status"], "synthesized");
    assert_eq!(body["cited_timestamps"], json!([2280]));
}

#[tokio::test]
async fn video_citation_comes_through_for_a_timestamp_question() {
    let server = TestServer::start().await;
    let session = server.session(RAW, 1).await;
    let (status, body) = server
        .post(
            "/chat",
            &json!({
                "session_id": session,
                "text": "At 30:48, why does the order of grouping not change the composed matrix?",
            }),
        )
        .await;
    assert_eq!(status, 200, "{body}");
    assert_eq!(body["cited_timestamps"], json!([1848]));
    let kinds: Vec<&str> = body["sections"].as_array().unwrap().iter().map(|s| s["source_kind"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["guidance", "video"]);
}

#[tokio::test]
async fn chat_for_unknown_session_is_not_found() {
    let server = TestServer::start().await;
    let (status, body) = server.post("/chat", &json!({"session_id": "nope", "text": "hello"})).await;
    assert_eq!(status, 404);
    assert_eq!(body["code"], "not_found");
}

#[tokio::test]
async fn chat_when_every_specialist_fails_is_provider_unavailable() {
    let provider = Arc::new(ScriptedProvider::new(vec![]));
    let server = TestServer::with(provider, None).await;
    let session = server.session(RAW, 1).await;
    let (status, body) = server.post("/chat", &json!({"session_id": session, "text": "what is a qubit"})).await;
    assert_eq!(status, 503);
    assert_eq!(body["code"], "provider_unavailable");
    assert_eq!(body["retryable"], true);
}

#[tokio::test]
async fn execute_emits_a_code_event() {
    let server = TestServer::start().await;
    let session = server.session(RAW, 3).await;
    let ok = solution("m3-c1", "legitimate");
    let (status, body) = server.post("/execute", &json!({"session_id": session, "source": ok["source"]})).await;
    assert_eq!(status, 200);
    assert_eq!(body["exit_ok"], true);
    let latex = solution("m3-c1", "runtime_error");
    let (_, body) = server.post("/execute", &json!({"session_id": session, "source": latex["source"]})).await;
    assert_eq!(body["error_category"], "missing_dependency");

    let code: Vec<_> = stored(&server)
        .await
        .into_iter()
        .filter_map(|e| match e.payload {
            EventPayload::Code(c) => Some((c.success, c.error_category.map(|c| c.as_str()))),
            _ => None,
        })
        .collect();
    assert_eq!(code, [(true, None), (false, Some("missing_dependency"))]);
}

struct DownSandbox;

#[async_trait]
impl Sandbox for DownSandbox {
    async fn execute(&self, _source: &str) -> Result<ExecutionResult, SandboxError> {
        Err(SandboxError::Unavailable("connection refused".into()))
    }
}

#[tokio::test]
async fn sandbox_outage_is_retryable() {
    let server = TestServer::with(pilot_provider(), Some(Arc::new(DownSandbox))).await;
    let session = server.session(RAW, 1).await;
    let (status, body) = server.post("/execute", &json!({"session_id": session, "source": "print(1)"})).await;
    assert_eq!(status, 503);
    assert_eq!(body["code"], "sandbox_unavailable");
    assert_eq!(body["retryable"], true);
}

#[tokio::test]
async fn oversized_source_is_rejected() {
    let server = TestServer::start().await;
    let session = server.session(RAW, 1).await;
    let big = "x".repeat(tutor_service::app::MAX_SOURCE_BYTES + 1);
    let (status, _) = server.post("/execute", &json!({"session_id": session, "source": big})).await;
    assert_eq!(status, 400);
}

#[tokio::test]
async fn checkpoint_submission_applies_both_criteria() {
    let server = TestServer::start().await;
    let session = server.session(RAW, 3).await;
    let submit = |kind: &'static str| {
        let s = solution("m3-c1", kind);
        let body = json!({"session_id": session, "source": s["source"]});
        let server = &server;
        async move { server.post("/checkpoints/m3-c1/submit", &body).await }
    };

    let (status, legit) = submit("legitimate").await;
    assert_eq!(status, 200, "{legit}");
    assert_eq!((legit["pass"].as_bool(), legit["output_ok"].as_bool(), legit["approach_ok"].as_bool()), (Some(true), Some(true), Some(true)));

    let (_, hard) = submit("hardcoded").await;
    assert_eq!(hard["output_ok"], true);
    assert_eq!(hard["approach_ok"], false);
    assert_eq!(hard["pass"], false);

    let (_, broken) = submit("runtime_error").await;
    assert_eq!(broken["pass"], false);
    assert_eq!(broken["hint"]["category"], "missing_dependency");
    assert!(broken["hint"]["escalation"].as_str().unwrap().starts_with("infrastructure-level"));

    let checkpoints: Vec<_> = stored(&server)
        .await
        .into_iter()
        .filter_map(|e| match e.payload {
            EventPayload::Checkpoint(c) => Some(c.pass),
            _ => None,
        })
        .collect();
    assert_eq!(checkpoints, [true, false, false]);
}

#[tokio::test]
async fn unknown_checkpoint_is_not_found() {
    let server = TestServer::start().await;
    let session = server.session(RAW, 3).await;
    let (status, body) = server.post("/checkpoints/m9-c9/submit", &json!({"session_id": session, "source": "print(1)"})).await;
    assert_eq!(status, 404);
    assert_eq!(body["code"], "not_found");
}

#[tokio::test]
async fn grading_outage_is_provider_unavailable_and_not_recorded() {
    let provider = Arc::new(ScriptedProvider::new(vec![
        ScriptedBehavior::new(MatchRule::schema(SchemaTag::GradeVerdict)).failing(tutor_core::provider::FailureMode::MalformedOutput),
    ]));
    let server = TestServer::with(provider, None).await;
    let session = server.session(RAW, 3).await;
    let s = solution("m3-c1", "legitimate");
    let (status, body) = server.post("/checkpoints/m3-c1/submit", &json!({"session_id": session, "source": s["source"]})).await;
    assert_eq!(status, 503);
    assert_eq!(body["code"], "provider_unavailable");
    assert!(stored(&server).await.iter().all(|e| e.category() != EventCategory::CheckpointSubmission));
}

#[tokio::test]
async fn events_are_accepted_once_and_malformed_ones_rejected() {
    let server = TestServer::start().await;
    let event = json!({
        "event_id": "ui-1",
        "alias": "0123456789abcdef",
        "category": "video_playback",
        "module_id": 2,
        "at": 1_756_112_400_000i64,
        "payload": {"position_s": 30, "action": "play"}
    });
    let (status, body) = server.post("/events", &event).await;
    assert_eq!((status, body["status"].as_str()), (202, Some("accepted")));
    let (status, body) = server.post("/events", &event).await;
    assert_eq!((status, body["status"].as_str()), (202, Some("duplicate")));

    let mut wrong = event.clone();
    wrong["event_id"] = json!("ui-2");
    wrong["payload"] = json!({"success": true});
    let (status, body) = server.post("/events", &wrong).await;
    assert_eq!(status, 400);
    assert_eq!(body["code"], "bad_request");
    assert_eq!(stored(&server).await.len(), 1);
}

#[tokio::test]
async fn modules_never_serve_grading_criteria() {
    let server = TestServer::start().await;
    let (status, text) = server.get_text("/modules").await;
    assert_eq!(status, 200);
    let curriculum = tutor_service::load_curriculum(&fixture("curriculum.json")).unwrap();
    for c in curriculum.modules.iter().flat_map(|m| &m.checkpoints) {
        assert!(!text.contains(&c.autograde_instructions), "{} autograde leaked", c.id);
        for criterion in &c.approach_criteria {
            assert!(!text.contains(criterion.as_str()), "{} criterion leaked", c.id);
        }
        assert!(text.contains(&c.prompt));
    }
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["modules"].as_array().unwrap().len(), 5);
}

#[tokio::test]
async fn instructor_routes_need_the_token() {
    let server = TestServer::start().await;
    let (status, body) = server.instructor("How did students engage with module 2?", None).await;
    assert_eq!(status, 403);
    assert_eq!(body["code"], "forbidden");
    let (status, _) = server.instructor("How did students engage with module 2?", Some("wrong")).await;
    assert_eq!(status, 403);
}

#[tokio::test]
async fn individual_questions_are_refused_before_any_read() {
    let server = TestServer::start().await;
    let (status, body) = server.instructor("What did student 7f3a9c2e1b0d4e55 ask the tutor?", Some(TOKEN)).await;
    assert_eq!(status, 403);
    assert_eq!(body["reason"], "individual_data");
    assert_eq!(server.state.analytics_reads().await, 0);
}

#[tokio::test]
async fn aggregate_question_is_answered_without_aliases() {
    let server = TestServer::start().await;
    let session = server.session(RAW, 1).await;
    for src in ["print(1)", "print(2)"] {
        server.post("/execute", &json!({"session_id": session, "source": src})).await;
    }
    let (status, body) = server.instructor("What is the overall code success rate?", Some(TOKEN)).await;
    assert_eq!(status, 200, "{body}");
    let alias = tutor_core::telemetry::alias::make_alias(RAW, KEY).unwrap();
    assert!(!body.to_string().contains(alias.as_str()));
    assert_eq!(body["query"]["template"], "code_failure_breakdown");
    assert!(!body["data_basis"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn healthz_reports_ok() {
    let server = TestServer::start().await;
    let (status, text) = server.get_text("/healthz").await;
    assert_eq!(status, 200);
    assert!(text.contains("\"status\":\"ok\""));
}
