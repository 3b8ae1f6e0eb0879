//! Sandbox `/execute` client against a local stub of the runner.

use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use tutor_core::model::ErrorCategory;
use tutor_core::sandbox::{RemoteSandbox, Sandbox, SandboxError};

type Seen = Arc<Mutex<Vec<Value>>>;

async fn execute(State(seen): State<Seen>, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let source = body["source"].as_str().unwrap_or("").to_owned();
    seen.lock().unwrap().push(body);
    let out = match source.as_str() {
        "print(1)" => json!({"stdout": "1\n", "stderr": "", "exit_ok": true, "duration_ms": 41}),
        "import pylatexenc" => json!({
            "stdout": "",
            "stderr": "ModuleNotFoundError: No module named 'pylatexenc'",
            "exit_ok": false,
            "duration_ms": 12
        }),
        "crash" => return (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({"detail": "boom"}))),
        _ => json!({"unexpected": true}),
    };
    (StatusCode::OK, Json(out))
}

async fn runner() -> (String, Seen) {
    let seen = Seen::default();
    let app = Router::new().route("/execute", post(execute)).with_state(seen.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (format!("http://{addr}"), seen)
}

#[tokio::test]
async fn posts_source_with_limits() {
    let (url, seen) = runner().await;
    let sandbox = RemoteSandbox::new(format!("{url}/"), Vec::new()).unwrap();
    let r = sandbox.execute("print(1)").await.unwrap();
    assert!(r.exit_ok);
    assert_eq!(r.stdout, "1\n");
    assert_eq!(r.error_category, None);
    let body = &seen.lock().unwrap()[0];
    assert_eq!(body["source"], "print(1)");
    assert!(body["timeout_ms"].as_u64().unwrap() > 0);
    assert!(body["memory_limit_mb"].as_u64().unwrap() > 0);
}

#[tokio::test]
async fn missing_category_is_filled_from_stderr() {
    let (url, _) = runner().await;
    let r = RemoteSandbox::new(url, Vec::new()).unwrap().execute("import pylatexenc").await.unwrap();
    assert!(!r.exit_ok);
    assert_eq!(r.error_category, Some(ErrorCategory::MissingDependency));
}

#[tokio::test]
async fn runner_failures_are_unavailable() {
    let (url, _) = runner().await;
    let sandbox = RemoteSandbox::new(url, Vec::new()).unwrap();
    assert!(matches!(sandbox.execute("crash").await, Err(SandboxError::Unavailable(_))));
    assert!(matches!(sandbox.execute("malformed reply").await, Err(SandboxError::Unavailable(_))));

    let down = RemoteSandbox::new("http://127.0.0.1:9", Vec::new()).unwrap();
    assert!(matches!(down.execute("print(1)").await, Err(SandboxError::Unavailable(_))));
}
