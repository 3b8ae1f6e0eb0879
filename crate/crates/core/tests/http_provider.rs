//! HTTP provider against a local completions stub.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::HeaderMap;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use tutor_core::provider::http::{HttpProvider, HttpProviderConfig};
use tutor_core::provider::{ModelProvider, ModelRequest, ProviderError, SchemaTag};

#[derive(Clone, Default)]
struct Seen {
    bodies: Arc<Mutex<Vec<Value>>>,
    auth: Arc<Mutex<Vec<String>>>,
}

async fn completions(State(seen): State<Seen>, headers: HeaderMap, Json(body): Json<Value>) -> Json<Value> {
    let auth = headers.get("authorization").and_then(|v| v.to_str().ok()).unwrap_or("").to_owned();
    seen.auth.lock().unwrap().push(auth);
    let last = body["messages"].as_array().and_then(|m| m.last()).and_then(|m| m["content"].as_str()).unwrap_or("").to_owned();
    let structured = body.get("response_format").is_some();
    seen.bodies.lock().unwrap().push(body);
    let content = if last == "slow" {
        tokio::time::sleep(Duration::from_millis(500)).await;
        "late".to_owned()
    } else if structured {
        if last == "bad" { "not json at all".to_owned() } else { r#"```json
{"approach_ok": true, "reasoning": "gates used"}
```"#.to_owned() }
    } else {
        format!("echo: {last}")
    };
    Json(json!({"choices": [{"message": {"role": "assistant", "content": content}}]}))
}

async fn stub() -> (String, Seen) {
    let seen = Seen::default();
    let app = Router::new().route("/v1/chat/completions", post(completions)).with_state(seen.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (format!("http://{addr}/v1"), seen)
}

fn provider(base_url: String, timeout: Duration) -> HttpProvider {
    HttpProvider::new(HttpProviderConfig { base_url, api_key: Some("k-test".into()), model: "m".into(), timeout }).unwrap()
}

#[tokio::test]
async fn plain_completion_round_trip() {
    let (url, seen) = stub().await;
    let p = provider(url, Duration::from_secs(5));
    let resp = p.complete(&ModelRequest::new("You are terse.").student("hello")).await.unwrap();
    assert_eq!(resp.text, "echo: hello");
    assert!(resp.structured.is_none());
    let body = &seen.bodies.lock().unwrap()[0];
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["role"], "user");
    assert!(body.get("response_format").is_none());
    assert_eq!(seen.auth.lock().unwrap()[0], "Bearer k-test");
}

#[tokio::test]
async fn structured_output_is_extracted_and_validated() {
    let (url, seen) = stub().await;
    let p = provider(url, Duration::from_secs(5));
    let resp = p.complete(&ModelRequest::new("Grade.").student("code").schema(SchemaTag::GradeVerdict)).await.unwrap();
    assert_eq!(resp.structured.unwrap()["approach_ok"], true);
    let system = seen.bodies.lock().unwrap()[0]["messages"][0]["content"].as_str().unwrap().to_owned();
    assert!(system.contains("approach_ok"));

    let err = p.complete(&ModelRequest::new("Grade.").student("bad").schema(SchemaTag::GradeVerdict)).await.unwrap_err();
    assert!(matches!(err, ProviderError::MalformedStructuredOutput { .. }));
}

#[tokio::test]
async fn slow_endpoint_times_out() {
    let (url, _) = stub().await;
    let p = provider(url, Duration::from_millis(100));
    let err = p.complete(&ModelRequest::new("x").student("slow")).await.unwrap_err();
    assert!(err.is_timeout(), "{err:?}");
}

#[tokio::test]
async fn unreachable_endpoint_is_transport_error() {
    let p = provider("http://127.0.0.1:9".into(), Duration::from_secs(2));
    let err = p.complete(&ModelRequest::new("x").student("y")).await.unwrap_err();
    assert!(matches!(err, ProviderError::Transport(_)), "{err:?}");
}
