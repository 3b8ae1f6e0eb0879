//! Replay and load harness. Both drive a full in-process service in test
//! mode (scripted provider, stub sandbox) over real HTTP.

pub mod load;
pub mod pilot;
pub mod replay;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;
use tutor_core::analytics::AnalyticsThresholds;
use tutor_core::model::Curriculum;
use tutor_core::orchestrator::OrchestratorConfig;
use tutor_core::provider::ModelProvider;
use tutor_core::sandbox::StubSandbox;
use tutor_core::telemetry::alias::Anonymizer;
use tutor_core::telemetry::store::EventStore;
use tutor_service::{AppState, Components};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot read {path}: {reason}")]
    Read { path: String, reason: String },
    #[error(transparent)]
    Startup(#[from] tutor_service::StartupError),
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Service(String),
}

pub fn read(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::Read { path: path.display().to_string(), reason: e.to_string() })
}

/// The repository's `fixtures/` directory.
pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Files a test-mode service is built from.
#[derive(Debug, Clone)]
pub struct TestModeFiles {
    pub curriculum: PathBuf,
    pub sandbox_stub: PathBuf,
}

impl Default for TestModeFiles {
    fn default() -> Self {
        let dir = fixtures_dir();
        Self { curriculum: dir.join("curriculum.json"), sandbox_stub: dir.join("sandbox_stub.json") }
    }
}

pub const HARNESS_TELEMETRY_KEY: &str = "harness-deployment-key";
pub const HARNESS_INSTRUCTOR_TOKEN: &str = "harness-instructor-token";

/// A running in-process service.
pub struct LocalService {
    pub base: String,
    pub addr: SocketAddr,
    pub state: Arc<AppState>,
    pub curriculum: Curriculum,
}

impl LocalService {
    pub async fn start(
        files: &TestModeFiles,
        provider: Arc<dyn ModelProvider>,
        store: Arc<dyn EventStore>,
        orchestrator: OrchestratorConfig,
    ) -> Result<Self, HarnessError> {
        let curriculum = tutor_service::load_curriculum(&files.curriculum)?;
        let sandbox = StubSandbox::from_json(&read(&files.sandbox_stub)?, curriculum.error_catalog.clone())
            .map_err(|e| HarnessError::Read { path: files.sandbox_stub.display().to_string(), reason: e.to_string() })?;
        let state = AppState::new(Components {
            curriculum: curriculum.clone(),
            provider,
            sandbox: Arc::new(sandbox),
            store,
            anonymizer: Anonymizer::new(HARNESS_TELEMETRY_KEY).expect("key is non-empty"),
            instructor_token: HARNESS_INSTRUCTOR_TOKEN.into(),
            orchestrator,
            analytics: AnalyticsThresholds::default(),
            telemetry_capacity: 100_000,
        });
        let addr = tutor_service::spawn_local(Arc::clone(&state)).await?;
        Ok(Self { base: format!("http://{addr}"), addr, state, curriculum })
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (p / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&v, 50.0), 10.0);
        assert_eq!(percentile(&v, 95.0), 19.0);
        assert_eq!(percentile(&v, 100.0), 20.0);
        assert_eq!(percentile(&[7.0], 95.0), 7.0);
        assert_eq!(percentile(&[], 50.0), 0.0);
    }
}
