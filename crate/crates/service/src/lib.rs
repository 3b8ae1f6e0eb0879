//! HTTP API of the classroom tutoring platform.

pub mod app;
pub mod config;
pub mod error;

use std::path::Path;
use std::sync::Arc;

use thiserror::Error;
use tutor_core::model::{validate_curriculum, Curriculum};
use tutor_core::orchestrator::OrchestratorConfig;
use tutor_core::provider::{HttpProvider, HttpProviderConfig};
use tutor_core::provider::ScriptedProvider;
use tutor_core::provider::ModelProvider;
use tutor_core::sandbox::{RemoteSandbox, Sandbox, StubSandbox};
use tutor_core::telemetry::alias::Anonymizer;
use tutor_core::telemetry::store::{EventStore, JsonlStore};

pub use app::{router, AppState, Components};
pub use config::{ProviderSelection, SandboxMode, ServiceConfig};
pub use error::{ApiError, ErrorCode};

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("cannot load {what} from {path}: {reason}")]
    Load { what: &'static str, path: String, reason: String },
    #[error("curriculum is invalid:\n{0}")]
    InvalidCurriculum(String),
    #[error("provider: {0}")]
    Provider(String),
    #[error("sandbox: {0}")]
    Sandbox(String),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: std::net::SocketAddr, source: std::io::Error },
}

fn load_err(what: &'static str, path: &Path, reason: impl ToString) -> StartupError {
    StartupError::Load { what, path: path.display().to_string(), reason: reason.to_string() }
}

/// Reads and validates a curriculum document.
pub fn load_curriculum(path: &Path) -> Result<Curriculum, StartupError> {
    let text = std::fs::read_to_string(path).map_err(|e| load_err("curriculum", path, e))?;
    let curriculum = Curriculum::from_json(&text).map_err(|e| load_err("curriculum", path, e))?;
    let violations = validate_curriculum(&curriculum.modules, &curriculum.error_catalog);
    if !violations.is_empty() {
        let lines: Vec<String> = violations.iter().map(|v| format!("  {v}")).collect();
        return Err(StartupError::InvalidCurriculum(lines.join("\n")));
    }
    Ok(curriculum)
}

/// Builds the service components described by `config`.
pub async fn components(config: &ServiceConfig) -> Result<Components, StartupError> {
    config.validate()?;
    let curriculum = load_curriculum(&config.curriculum_path)?;
    let provider: Arc<dyn ModelProvider> = match &config.provider {
        ProviderSelection::Scripted { script } => {
            Arc::new(ScriptedProvider::load_script(script).map_err(|e| load_err("provider script", script, e))?)
        }
        ProviderSelection::Http => {
            let http = HttpProviderConfig::from_env()
                .ok_or_else(|| StartupError::Provider("PROVIDER_BASE_URL is not set".into()))?;
            Arc::new(HttpProvider::new(http).map_err(|e| StartupError::Provider(e.to_string()))?)
        }
    };
    let sandbox: Arc<dyn Sandbox> = match &config.sandbox {
        SandboxMode::Remote { url } => Arc::new(
            RemoteSandbox::new(url.clone(), curriculum.error_catalog.clone())
                .map_err(|e| StartupError::Sandbox(e.to_string()))?,
        ),
        SandboxMode::Stub { rules } => {
            let text = std::fs::read_to_string(rules).map_err(|e| load_err("sandbox stub", rules, e))?;
            Arc::new(
                StubSandbox::from_json(&text, curriculum.error_catalog.clone())
                    .map_err(|e| load_err("sandbox stub", rules, e))?,
            )
        }
    };
    if let Some(dir) = config.event_log_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| load_err("event log directory", dir, e))?;
    }
    let store: Arc<dyn EventStore> = Arc::new(
        JsonlStore::open(&config.event_log_path).await.map_err(|e| load_err("event log", &config.event_log_path, e))?,
    );
    let anonymizer = Anonymizer::new(config.telemetry_key.clone()).map_err(|e| StartupError::Provider(e.to_string()))?;
    Ok(Components {
        curriculum,
        provider,
        sandbox,
        store,
        anonymizer,
        instructor_token: config.instructor_token.clone(),
        orchestrator: OrchestratorConfig {
            confidence_threshold: config.confidence_threshold,
            budget: config.chat_budget,
            ..OrchestratorConfig::default()
        },
        analytics: config.analytics,
        telemetry_capacity: config.telemetry_capacity,
    })
}

/// Serves until ctrl-c, then drains buffered telemetry.
pub async fn serve(config: ServiceConfig) -> Result<(), StartupError> {
    let state = AppState::new(components(&config).await?);
    let listener = tokio::net::TcpListener::bind(config.listen)
        .await
        .map_err(|source| StartupError::Bind { addr: config.listen, source })?;
    tracing::info!(addr = %config.listen, test_mode = config.test_mode, "listening");
    let app = router(Arc::clone(&state));
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await.map_err(|source| StartupError::Bind {
        addr: config.listen,
        source,
    })?;
    if !state.flush_events(std::time::Duration::from_secs(5)).await {
        tracing::warn!(stats = ?state.queue_stats(), "telemetry not fully written at shutdown");
    }
    Ok(())
}

/// Serves the router on an ephemeral loopback port in the background and
/// returns the bound address. Used by tests and the replay harness.
pub async fn spawn_local(state: Arc<AppState>) -> std::io::Result<std::net::SocketAddr> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", 0)).await?;
    let addr = listener.local_addr()?;
    let app = router(state);
    tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            tracing::error!(error = %e, "local server stopped");
        }
    });
    Ok(addr)
}
