//! Router and shared state. One process hosts the teaching, execution
//! proxy, ingestion and autograding services behind a single router.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, RwLock};
use tutor_core::analytics::{targets_individual, AnalyticsAgent, AnalyticsSnapshot, AnalyticsThresholds, Findings};
use tutor_core::grader::{debug_hint, AutogradingService, DebugHint, GradeError, GradeResult, Submission};
use tutor_core::model::{
    CodePayload, Curriculum, EventPayload, SessionAction, SessionPayload, StudentAlias, StudentQuery, TelemetryEvent,
    TimestampedConcept,
};
use tutor_core::orchestrator::{OrchestratorConfig, OrchestratorError, SynthesizedResponse, TeachingOrchestrator};
use tutor_core::provider::ModelProvider;
use tutor_core::sandbox::{ExecutionResult, Sandbox};
use tutor_core::sessions::SessionStore;
use tutor_core::telemetry::aggregate::{aggregate, AggregateSummary};
use tutor_core::telemetry::alias::Anonymizer;
use tutor_core::telemetry::queue::{IngestOutcome, IngestQueue, QueueStats, RetryPolicy};
use tutor_core::telemetry::store::EventStore;
use tutor_core::telemetry::{new_event, EventSink};

use crate::error::ApiError;

/// Largest accepted source file, matching the sandbox limit.
pub const MAX_SOURCE_BYTES: usize = 64 * 1024;
const FLUSH_BEFORE_AGGREGATE: Duration = Duration::from_secs(2);

/// Everything the router needs, built from config or injected by tests.
pub struct Components {
    pub curriculum: Curriculum,
    pub provider: Arc<dyn ModelProvider>,
    pub sandbox: Arc<dyn Sandbox>,
    pub store: Arc<dyn EventStore>,
    pub anonymizer: Anonymizer,
    pub instructor_token: String,
    pub orchestrator: OrchestratorConfig,
    pub analytics: AnalyticsThresholds,
    pub telemetry_capacity: usize,
}

struct CachedSnapshot {
    written: u64,
    snapshot: Arc<AnalyticsSnapshot>,
}

pub struct AppState {
    curriculum: Arc<Curriculum>,
    provider: Arc<dyn ModelProvider>,
    sandbox: Arc<dyn Sandbox>,
    store: Arc<dyn EventStore>,
    sessions: Arc<SessionStore>,
    queue: IngestQueue,
    orchestrator: TeachingOrchestrator,
    grader: AutogradingService,
    agent: AnalyticsAgent,
    anonymizer: Anonymizer,
    instructor_token: String,
    thresholds: AnalyticsThresholds,
    snapshot: RwLock<Option<CachedSnapshot>>,
    refresh: Mutex<()>,
    store_reads: AtomicU64,
}

impl AppState {
    /// Starts the ingestion worker, so this must run inside a Tokio runtime.
    pub fn new(c: Components) -> Arc<Self> {
        let curriculum = Arc::new(c.curriculum);
        let sessions = Arc::new(SessionStore::new());
        let (queue, _worker) = IngestQueue::start(Arc::clone(&c.store), c.telemetry_capacity, RetryPolicy::default());
        let sink: Arc<dyn EventSink> = Arc::new(queue.clone());
        let orchestrator = TeachingOrchestrator::new(
            Arc::clone(&c.provider),
            Arc::clone(&curriculum),
            Arc::clone(&sessions),
            Arc::clone(&sink),
            c.orchestrator,
        );
        Arc::new(Self {
            grader: AutogradingService::new(Arc::clone(&c.provider), sink),
            agent: AnalyticsAgent::new(Arc::clone(&c.provider)),
            curriculum,
            provider: c.provider,
            sandbox: c.sandbox,
            store: c.store,
            sessions,
            queue,
            orchestrator,
            anonymizer: c.anonymizer,
            instructor_token: c.instructor_token,
            thresholds: c.analytics,
            snapshot: RwLock::new(None),
            refresh: Mutex::new(()),
            store_reads: AtomicU64::new(0),
        })
    }

    pub fn queue_stats(&self) -> QueueStats {
        self.queue.stats()
    }

    pub async fn flush_events(&self, timeout: Duration) -> bool {
        self.queue.flush(timeout).await
    }

    /// Store scans plus accessor reads on the current analytics snapshot.
    pub async fn analytics_reads(&self) -> u64 {
        let snap_reads = self.snapshot.read().await.as_ref().map_or(0, |c| c.snapshot.data_reads());
        self.store_reads.load(Ordering::Relaxed) + snap_reads
    }

    /// Returns the analytics snapshot, re-aggregating when events were
    /// written since the last one. Readers keep the old snapshot until the
    /// new one is swapped in.
    pub async fn analytics_snapshot(&self) -> Result<Arc<AnalyticsSnapshot>, ApiError> {
        self.queue.flush(FLUSH_BEFORE_AGGREGATE).await;
        let written = self.queue.stats().written;
        if let Some(c) = self.snapshot.read().await.as_ref().filter(|c| c.written == written) {
            return Ok(Arc::clone(&c.snapshot));
        }
        let _refresh = self.refresh.lock().await;
        if let Some(c) = self.snapshot.read().await.as_ref().filter(|c| c.written == written) {
            return Ok(Arc::clone(&c.snapshot));
        }
        let (summary, findings) = self.aggregate_store().await?;
        let snapshot = Arc::new(AnalyticsSnapshot::new(summary, findings, &self.curriculum));
        *self.snapshot.write().await = Some(CachedSnapshot { written, snapshot: Arc::clone(&snapshot) });
        Ok(snapshot)
    }

    pub async fn aggregate_store(&self) -> Result<(AggregateSummary, Findings), ApiError> {
        self.store_reads.fetch_add(1, Ordering::Relaxed);
        let snap = self.store.snapshot().await.map_err(|e| {
            tracing::error!(error = %e, "event store unreadable");
            ApiError::provider_unavailable("analytics store unavailable")
        })?;
        let summary = aggregate(&snap.events, snap.corrupt_lines, &self.curriculum);
        let findings = Findings::compute(&summary, &self.curriculum, self.thresholds);
        Ok((summary, findings))
    }

    fn emit(&self, alias: StudentAlias, module_id: u8, payload: EventPayload) {
        self.queue.emit(new_event(alias, module_id, payload));
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/modules", get(modules))
        .route("/sessions", post(create_session))
        .route("/chat", post(chat))
        .route("/execute", post(execute))
        .route("/checkpoints/{id}/submit", post(submit_checkpoint))
        .route("/events", post(ingest_event))
        .route("/instructor/query", post(instructor_query))
        .with_state(state)
}

/// Parses a JSON body. The error names the position only, never the
/// offending value, so raw identifiers cannot be echoed back.
fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        ApiError::bad_request(format!("malformed request body ({:?} error at line {} column {})", e.classify(), e.line(), e.column()))
    })
}

async fn healthz(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "telemetry": state.queue_stats() }))
}

#[derive(Serialize)]
struct PublicCheckpoint<'a> {
    id: &'a str,
    module_id: u8,
    prompt: &'a str,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    required_names: &'a [String],
}

#[derive(Serialize)]
struct PublicModule<'a> {
    id: u8,
    title: &'a str,
    video_length_s: u32,
    concept_map: &'a [TimestampedConcept],
    checkpoints: Vec<PublicCheckpoint<'a>>,
}

/// The curriculum as students see it: prompts and concept maps, without
/// grading, guidance or debugging instructions.
async fn modules(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let modules: Vec<PublicModule> = state
        .curriculum
        .modules
        .iter()
        .map(|m| PublicModule {
            id: m.id,
            title: &m.title,
            video_length_s: m.video_length_s,
            concept_map: &m.concept_map,
            checkpoints: m
                .checkpoints
                .iter()
                .map(|c| PublicCheckpoint {
                    id: &c.id,
                    module_id: c.module_id,
                    prompt: &c.prompt,
                    required_names: &c.required_names,
                })
                .collect(),
        })
        .collect();
    Json(serde_json::json!({ "modules": modules }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    raw_student_ref: String,
    module_id: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub alias: StudentAlias,
    pub module_id: u8,
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<SessionCreated>, ApiError> {
    let req: CreateSession = parse(&body)?;
    if state.curriculum.module(req.module_id).is_none() {
        return Err(ApiError::bad_request(format!("unknown module {}", req.module_id)));
    }
    let alias = state.anonymizer.alias(&req.raw_student_ref).map_err(|e| ApiError::bad_request(e.to_string()))?;
    drop(req.raw_student_ref);
    let session = state.sessions.create(alias.clone(), req.module_id).map_err(|e| ApiError::bad_request(e.to_string()))?;
    state.emit(alias.clone(), req.module_id, EventPayload::Session(SessionPayload { action: SessionAction::Start }));
    tracing::info!(session = %session.id, module = req.module_id, "session started");
    Ok(Json(SessionCreated { session_id: session.id, alias, module_id: req.module_id }))
}

async fn chat(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<SynthesizedResponse>, ApiError> {
    let query: StudentQuery = parse(&body)?;
    match state.orchestrator.handle_query(query).await {
        Ok(response) => Ok(Json(response)),
        Err(OrchestratorError::SessionNotFound) => Err(ApiError::not_found("session not found")),
        Err(OrchestratorError::ModuleNotFound(m)) => Err(ApiError::not_found(format!("module {m} not found"))),
        Err(OrchestratorError::BadQuery(why)) => Err(ApiError::bad_request(why)),
        Err(OrchestratorError::AllSpecialistsFailed { .. }) => {
            tracing::warn!("all specialists failed");
            Err(ApiError::provider_unavailable("the tutor could not answer right now"))
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunCode {
    session_id: String,
    source: String,
}

impl RunCode {
    fn check(&self) -> Result<(), ApiError> {
        if self.source.len() > MAX_SOURCE_BYTES {
            return Err(ApiError::bad_request(format!("source exceeds {MAX_SOURCE_BYTES} bytes")));
        }
        Ok(())
    }
}

async fn run(state: &AppState, source: &str) -> Result<ExecutionResult, ApiError> {
    state.sandbox.execute(source).await.map_err(|e| {
        tracing::warn!(error = %e, "sandbox call failed");
        ApiError::sandbox_unavailable("code execution is unavailable")
    })
}

async fn execute(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<ExecutionResult>, ApiError> {
    let req: RunCode = parse(&body)?;
    req.check()?;
    let (alias, module_id) = state.sessions.lookup(&req.session_id).await.ok_or_else(|| ApiError::not_found("session not found"))?;
    let result = run(&state, &req.source).await?;
    let error_category = if result.exit_ok { None } else { result.error_category };
    state.emit(alias, module_id, EventPayload::Code(CodePayload { success: result.exit_ok, error_category }));
    Ok(Json(result))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitResponse {
    #[serde(flatten)]
    pub grade: GradeResult,
    /// Debugging hint when the submission failed to run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint: Option<DebugHint>,
}

async fn submit_checkpoint(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SubmitResponse>, ApiError> {
    let req: RunCode = parse(&body)?;
    req.check()?;
    let checkpoint = state.curriculum.checkpoint(&id).ok_or_else(|| ApiError::not_found(format!("checkpoint {id} not found")))?;
    let (alias, _) = state.sessions.lookup(&req.session_id).await.ok_or_else(|| ApiError::not_found("session not found"))?;
    if req.source.trim().is_empty() {
        return Err(ApiError::bad_request("source is empty"));
    }
    let execution = run(&state, &req.source).await?;
    let submission = Submission { checkpoint_id: id, session_id: req.session_id, source: req.source, execution };
    let grade = state.grader.submit(&alias, &submission, checkpoint).await.map_err(|e| match e {
        GradeError::GradingUnavailable(why) => {
            tracing::warn!(error = %why, checkpoint = %checkpoint.id, "grading unavailable");
            ApiError::provider_unavailable("grading is unavailable; please resubmit shortly")
        }
        other => ApiError::bad_request(other.to_string()),
    })?;
    let hint = if submission.execution.exit_ok {
        None
    } else {
        Some(debug_hint(&submission, checkpoint, &state.curriculum.error_catalog, state.provider.as_ref()).await)
    };
    Ok(Json(SubmitResponse { grade, hint }))
}

async fn ingest_event(State(state): State<Arc<AppState>>, body: Bytes) -> Result<(StatusCode, Json<serde_json::Value>), ApiError> {
    let event: TelemetryEvent = parse(&body)?;
    let outcome = state.queue.ingest(event);
    let status = match outcome {
        IngestOutcome::Queued => "accepted",
        IngestOutcome::Duplicate => "duplicate",
    };
    Ok((StatusCode::ACCEPTED, Json(serde_json::json!({ "status": status }))))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InstructorQuestion {
    question: String,
}

fn authorized(headers: &HeaderMap, token: &str) -> bool {
    headers
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|t| !token.is_empty() && t == token)
}

const REFUSAL_MESSAGE: &str =
    "Questions about individual students are not answered; ask about patterns across the class instead.";

async fn instructor_query(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<tutor_core::analytics::InstructorAnswer>, ApiError> {
    if !authorized(&headers, &state.instructor_token) {
        return Err(ApiError::forbidden("instructor token required", "instructor_token"));
    }
    let req: InstructorQuestion = parse(&body)?;
    // refuse before any aggregate is built or read
    if targets_individual(&req.question) {
        return Err(ApiError::forbidden(REFUSAL_MESSAGE, "individual_data"));
    }
    let snapshot = state.analytics_snapshot().await?;
    let answer = state.agent.answer(&req.question, &snapshot).await;
    if answer.refusal.is_some() {
        return Err(ApiError::forbidden(REFUSAL_MESSAGE, "individual_data"));
    }
    Ok(Json(answer))
}
