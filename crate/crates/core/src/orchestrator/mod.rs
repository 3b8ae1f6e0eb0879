//! Parallel specialist fan-out with priority-ordered synthesis.
//!
//! A student query goes to the video, guidance and code specialists at the
//! same time. Once all three have answered (or timed out), low-confidence and
//! not-applicable reports are dropped and the rest are ordered
//! code > guidance > video. One synthesizer call rewrites the retained
//! sections; it may not reorder or add sections.

mod classify;
mod specialist;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use classify::{classify_question, keyword_category};
pub use specialist::{
    build_request, concept_line, format_clock, mentioned_timestamps, nearest_concept, run_specialist, snap,
    SpecialistContext, GRADUATE_DIRECTIVE, SNAP_WINDOW_S,
};

use crate::model::{ChatPayload, Curriculum, EventPayload, LessonModule, StudentQuery, TimestampedConcept};
use crate::provider::{ModelProvider, ModelRequest, SchemaTag};
use crate::sessions::SessionStore;
use crate::telemetry::{new_event, EventSink};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Video,
    Guidance,
    Code,
    Synthesizer,
}

impl AgentKind {
    pub const SPECIALISTS: [AgentKind; 3] = [AgentKind::Code, AgentKind::Guidance, AgentKind::Video];

    /// Position in the response; lower comes first.
    pub fn priority(self) -> u8 {
        match self {
            AgentKind::Code => 0,
            AgentKind::Guidance => 1,
            AgentKind::Video => 2,
            AgentKind::Synthesizer => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Video => "video",
            AgentKind::Guidance => "guidance",
            AgentKind::Code => "code",
            AgentKind::Synthesizer => "synthesizer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relevance {
    Primary,
    Supporting,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    TimestampS(u32),
    CodeLocation(String),
    Concept(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    LowConfidence,
    NotApplicable,
    Timeout,
    ProviderError,
    MalformedOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecialistReport {
    pub kind: AgentKind,
    pub confidence: f64,
    pub content: String,
    #[serde(default)]
    pub references: Vec<Reference>,
    pub relevance: Relevance,
    /// Set when the report stands in for a failed specialist.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degraded: Option<DropReason>,
}

impl SpecialistReport {
    pub fn new(kind: AgentKind, confidence: f64, relevance: Relevance, content: impl Into<String>) -> Self {
        Self { kind, confidence, content: content.into(), references: Vec::new(), relevance, degraded: None }
    }

    pub fn with_reference(mut self, r: Reference) -> Self {
        self.references.push(r);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub source_kind: AgentKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedReport {
    pub kind: AgentKind,
    pub reason: DropReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseStatus {
    Synthesized,
    /// The synthesizer failed; sections are the raw reports in priority order.
    FallbackOrdered,
    AllSpecialistsFailed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesizedResponse {
    pub sections: Vec<Section>,
    pub cited_timestamps: Vec<u32>,
    pub dropped_reports: Vec<DroppedReport>,
    pub status: ResponseStatus,
}

impl SynthesizedResponse {
    pub fn section_order(&self) -> Vec<AgentKind> {
        self.sections.iter().map(|s| s.source_kind).collect()
    }

    pub fn text(&self) -> String {
        self.sections.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join("\n\n")
    }
}

pub const APOLOGY: &str = "Sorry, I could not put together a reliable answer to that just now. \
Please try rephrasing the question or ask again in a moment.";

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("session not found")]
    SessionNotFound,
    #[error("module {0} is not in the curriculum")]
    ModuleNotFound(u8),
    #[error("invalid query: {0}")]
    BadQuery(String),
    #[error("no specialist produced a usable report")]
    AllSpecialistsFailed { fallback: SynthesizedResponse },
}

#[derive(Debug, Clone)]
pub struct OrchestratorConfig {
    pub confidence_threshold: f64,
    /// End-to-end budget for one query; specialists get 3/4 of it.
    pub budget: Duration,
    pub guidance_directive: String,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        Self {
            confidence_threshold: 0.4,
            budget: Duration::from_secs(10),
            guidance_directive: GRADUATE_DIRECTIVE.to_owned(),
        }
    }
}

impl OrchestratorConfig {
    pub fn specialist_timeout(&self) -> Duration {
        self.budget.mul_f64(0.75)
    }
}

/// Applies the confidence filter and priority order. Pure: depends only on
/// report kinds, relevance and confidence, never on arrival order.
pub fn retain_and_order(reports: &[SpecialistReport], threshold: f64) -> (Vec<SpecialistReport>, Vec<DroppedReport>) {
    let mut sorted: Vec<&SpecialistReport> = reports.iter().filter(|r| r.kind != AgentKind::Synthesizer).collect();
    sorted.sort_by_key(|r| r.kind.priority());
    sorted.dedup_by_key(|r| r.kind);

    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for r in sorted {
        let reason = if let Some(d) = r.degraded {
            Some(d)
        } else if r.relevance == Relevance::NotApplicable {
            Some(DropReason::NotApplicable)
        } else if r.confidence.is_nan() || r.confidence < threshold {
            Some(DropReason::LowConfidence)
        } else {
            None
        };
        match reason {
            Some(reason) => dropped.push(DroppedReport { kind: r.kind, reason }),
            None => kept.push(r.clone()),
        }
    }
    (kept, dropped)
}

fn cited_timestamps(kept: &[SpecialistReport], map: &[TimestampedConcept]) -> Vec<u32> {
    let mut out: Vec<u32> = kept
        .iter()
        .flat_map(|r| r.references.iter())
        .filter_map(|r| match r {
            Reference::TimestampS(t) => snap(map, *t),
            _ => None,
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

const SYNTH_ROLE: &str = "You are the Synthesizer of a quantum information tutoring team. \
Rewrite each specialist section below into clear, student-facing prose. Keep every section about \
its own source: code diagnosis, then conceptual guidance, then video references. Do not add sections, \
do not merge them, and never write a complete solution.";

/// Filters, orders and rewrites the specialist reports with one synthesizer
/// call. With nothing retained, no call is made.
pub async fn synthesize(
    provider: &dyn ModelProvider,
    reports: &[SpecialistReport],
    query: &StudentQuery,
    concept_map: &[TimestampedConcept],
    threshold: f64,
) -> SynthesizedResponse {
    let (kept, dropped) = retain_and_order(reports, threshold);
    if kept.is_empty() {
        return SynthesizedResponse {
            sections: vec![Section { source_kind: AgentKind::Synthesizer, text: APOLOGY.to_owned() }],
            cited_timestamps: Vec::new(),
            dropped_reports: dropped,
            status: ResponseStatus::AllSpecialistsFailed,
        };
    }
    let cited = cited_timestamps(&kept, concept_map);

    let mut user = format!("Student question: {}\n", query.text);
    for r in &kept {
        user.push_str(&format!("\n## {}\n{}\n", r.kind.as_str(), r.content));
    }
    let request = ModelRequest::new(SYNTH_ROLE).student(user).schema(SchemaTag::Synthesis);
    let rewritten: Option<Value> = provider.complete(&request).await.ok().and_then(|r| r.structured);

    let status = if rewritten.is_some() { ResponseStatus::Synthesized } else { ResponseStatus::FallbackOrdered };
    let sections = kept
        .iter()
        .map(|r| {
            let text = rewritten
                .as_ref()
                .and_then(|v| v.get(r.kind.as_str()))
                .and_then(Value::as_str)
                .filter(|t| !t.trim().is_empty())
                .unwrap_or(&r.content);
            Section { source_kind: r.kind, text: text.to_owned() }
        })
        .collect();
    SynthesizedResponse { sections, cited_timestamps: cited, dropped_reports: dropped, status }
}

/// Builds the three specialist contexts for a module.
pub fn contexts_for(module: &LessonModule, curriculum: &Curriculum, directive: &str) -> [SpecialistContext; 3] {
    let mut catalog: Vec<_> = module.debug_catalog().cloned().collect();
    catalog.extend(curriculum.error_catalog.iter().cloned());
    [
        SpecialistContext::Code { catalog },
        SpecialistContext::Guidance {
            directive: directive.to_owned(),
            guidance_instructions: module.checkpoints.iter().map(|c| c.guidance_instructions.clone()).collect(),
        },
        SpecialistContext::Video { concept_map: module.concept_map.clone(), video_length_s: module.video_length_s },
    ]
}

pub struct TeachingOrchestrator {
    provider: Arc<dyn ModelProvider>,
    curriculum: Arc<Curriculum>,
    sessions: Arc<SessionStore>,
    events: Arc<dyn EventSink>,
    config: OrchestratorConfig,
}

impl TeachingOrchestrator {
    pub fn new(
        provider: Arc<dyn ModelProvider>,
        curriculum: Arc<Curriculum>,
        sessions: Arc<SessionStore>,
        events: Arc<dyn EventSink>,
        config: OrchestratorConfig,
    ) -> Self {
        Self { provider, curriculum, sessions, events, config }
    }

    pub fn config(&self) -> &OrchestratorConfig {
        &self.config
    }

    pub async fn handle_query(&self, query: StudentQuery) -> Result<SynthesizedResponse, OrchestratorError> {
        let (alias, module_id) = self.sessions.lookup(&query.session_id).await.ok_or(OrchestratorError::SessionNotFound)?;
        let module = self.curriculum.module(module_id).ok_or(OrchestratorError::ModuleNotFound(module_id))?;
        if query.text.trim().is_empty() {
            return Err(OrchestratorError::BadQuery("question text is empty".into()));
        }
        if query.video_position_s.is_some_and(|p| p >= module.video_length_s) {
            return Err(OrchestratorError::BadQuery("video position beyond the end of the lecture".into()));
        }

        // label and emit off the response path
        {
            let provider = Arc::clone(&self.provider);
            let events = Arc::clone(&self.events);
            let text = query.text.clone();
            tokio::spawn(async move {
                let question_category = classify_question(&text, provider.as_ref()).await;
                events.emit(new_event(alias, module_id, EventPayload::Chat(ChatPayload { question_category })));
            });
        }

        let [code_ctx, guidance_ctx, video_ctx] = contexts_for(module, &self.curriculum, &self.config.guidance_directive);
        let timeout = self.config.specialist_timeout();
        let provider = self.provider.as_ref();
        let (code, guidance, video) = tokio::join!(
            bounded(timeout, AgentKind::Code, run_specialist(provider, &query, &code_ctx)),
            bounded(timeout, AgentKind::Guidance, run_specialist(provider, &query, &guidance_ctx)),
            bounded(timeout, AgentKind::Video, run_specialist(provider, &query, &video_ctx)),
        );
        let response = synthesize(
            provider,
            &[code, guidance, video],
            &query,
            &module.concept_map,
            self.config.confidence_threshold,
        )
        .await;

        self.sessions.record_exchange(&query.session_id, &query.text, &response.text()).await;
        if response.status == ResponseStatus::AllSpecialistsFailed {
            return Err(OrchestratorError::AllSpecialistsFailed { fallback: response });
        }
        Ok(response)
    }
}

async fn bounded(
    timeout: Duration,
    kind: AgentKind,
    work: impl std::future::Future<Output = SpecialistReport>,
) -> SpecialistReport {
    match tokio::time::timeout(timeout, work).await {
        Ok(r) => r,
        Err(_) => SpecialistReport {
            kind,
            confidence: 0.0,
            content: format!("no answer within {} ms", timeout.as_millis()),
            references: Vec::new(),
            relevance: Relevance::NotApplicable,
            degraded: Some(DropReason::Timeout),
        },
    }
}
