#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use serde_json::Value;
use tutor_core::analytics::AnalyticsThresholds;
use tutor_core::orchestrator::OrchestratorConfig;
use tutor_core::provider::{ModelProvider, ScriptedProvider};
use tutor_core::sandbox::{Sandbox, StubSandbox};
use tutor_core::telemetry::alias::Anonymizer;
use tutor_core::telemetry::store::{EventStore, MemoryStore};
use tutor_service::{load_curriculum, AppState, Components};

pub const TOKEN: &str = "instructor-secret";
pub const KEY: &str = "test-deployment-key";

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn pilot_provider() -> Arc<ScriptedProvider> {
    Arc::new(ScriptedProvider::load_script(fixture("scripts/pilot.json")).unwrap())
}

pub fn components(provider: Arc<dyn ModelProvider>, sandbox: Option<Arc<dyn Sandbox>>, store: Arc<dyn EventStore>) -> Components {
    let curriculum = load_curriculum(&fixture("curriculum.json")).unwrap();
    let sandbox = sandbox.unwrap_or_else(|| {
        let rules = std::fs::read_to_string(fixture("sandbox_stub.json")).unwrap();
        Arc::new(StubSandbox::from_json(&rules, curriculum.error_catalog.clone()).unwrap())
    });
    Components {
        curriculum,
        provider,
        sandbox,
        store,
        anonymizer: Anonymizer::new(KEY).unwrap(),
        instructor_token: TOKEN.into(),
        orchestrator: OrchestratorConfig::default(),
        analytics: AnalyticsThresholds::default(),
        telemetry_capacity: 10_000,
    }
}

pub struct TestServer {
    pub base: String,
    pub state: Arc<AppState>,
    pub store: Arc<MemoryStore>,
    pub client: reqwest::Client,
}

impl TestServer {
    pub async fn start() -> Self {
        Self::with(pilot_provider(), None).await
    }

    pub async fn with(provider: Arc<dyn ModelProvider>, sandbox: Option<Arc<dyn Sandbox>>) -> Self {
        let store = Arc::new(MemoryStore::new());
        let state = AppState::new(components(provider, sandbox, store.clone()));
        let addr: SocketAddr = tutor_service::spawn_local(state.clone()).await.unwrap();
        Self { base: format!("http://{addr}"), state, store, client: reqwest::Client::new() }
    }

    pub async fn post(&self, path: &str, body: &Value) -> (u16, Value) {
        let resp = self.client.post(format!("{}{path}", self.base)).json(body).send().await.unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().await.unwrap_or(Value::Null))
    }

    pub async fn instructor(&self, question: &str, token: Option<&str>) -> (u16, Value) {
        let mut req = self.client.post(format!("{}/instructor/query", self.base)).json(&serde_json::json!({ "question": question }));
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().await.unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().await.unwrap_or(Value::Null))
    }

    pub async fn get_text(&self, path: &str) -> (u16, String) {
        let resp = self.client.get(format!("{}{path}", self.base)).send().await.unwrap();
        (resp.status().as_u16(), resp.text().await.unwrap())
    }

    pub async fn session(&self, raw: &str, module_id: u8) -> String {
        let (status, body) = self.post("/sessions", &serde_json::json!({ "raw_student_ref": raw, "module_id": module_id })).await;
        assert_eq!(status, 200, "{body}");
        body["session_id"].as_str().unwrap().to_owned()
    }
}

pub fn solutions() -> Vec<Value> {
    serde_json::from_str(&std::fs::read_to_string(fixture("solutions.json")).unwrap()).unwrap()
}

pub fn solution(checkpoint: &str, kind: &str) -> Value {
    solutions()
        .into_iter()
        .find(|s| s["checkpoint_id"] == checkpoint && s["kind"] == kind)
        .unwrap_or_else(|| panic!("no {kind} solution for {checkpoint}"))
}
