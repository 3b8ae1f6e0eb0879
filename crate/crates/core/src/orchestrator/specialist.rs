//! The three specialists. Each builds a request from its own context only.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{AgentKind, DropReason, Reference, Relevance, SpecialistReport};
use crate::model::{match_catalog, KnownError, StudentQuery, TimestampedConcept};
use crate::provider::{ModelProvider, ModelRequest, ProviderError, SchemaTag};

/// Calibration text for the guidance specialist.
pub const GRADUATE_DIRECTIVE: &str = "The audience is graduate-level. Keep the formal derivations and full mathematical rigor in every explanation.";

const VIDEO_ROLE: &str = "You are the Video specialist of a quantum information tutoring team. \
You only locate relevant lecture segments using the timestamp-indexed concept map below. \
Never discuss code and never invent timestamps that are not in the map.";

const GUIDANCE_ROLE: &str = "You are the Guidance specialist of a quantum information tutoring team. \
You explain concepts and mathematical formalism. Frame help as hints; never write complete solutions. \
Do not cite lecture timestamps.";

const CODE_ROLE: &str = "You are the Code specialist of a quantum information tutoring team. \
You diagnose Python and Qiskit errors using the error catalog below. \
Point at the faulty construct and the correct API, but never write a complete solution.";

/// Snap window for matching cited timestamps against the concept map.
pub const SNAP_WINDOW_S: u32 = 30;

/// What one specialist may see.
#[derive(Debug, Clone)]
pub enum SpecialistContext {
    Video { concept_map: Vec<TimestampedConcept>, video_length_s: u32 },
    Guidance { directive: String, guidance_instructions: Vec<String> },
    Code { catalog: Vec<KnownError> },
}

impl SpecialistContext {
    pub fn kind(&self) -> AgentKind {
        match self {
            SpecialistContext::Video { .. } => AgentKind::Video,
            SpecialistContext::Guidance { .. } => AgentKind::Guidance,
            SpecialistContext::Code { .. } => AgentKind::Code,
        }
    }
}

pub fn format_clock(s: u32) -> String {
    if s >= 3600 {
        format!("{}:{:02}:{:02}", s / 3600, (s / 60) % 60, s % 60)
    } else {
        format!("{}:{:02}", s / 60, s % 60)
    }
}

/// The line used to render one concept-map entry in prompts.
pub fn concept_line(c: &TimestampedConcept) -> String {
    format!("- {}s ({}): {}", c.at_s, format_clock(c.at_s), c.concept)
}

static CLOCK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(?:(\d{1,2}):)?(\d{1,2}):(\d{2})\b").expect("clock pattern"));

/// Lecture positions written as `mm:ss` or `h:mm:ss` in free text.
pub fn mentioned_timestamps(text: &str) -> Vec<u32> {
    CLOCK
        .captures_iter(text)
        .filter_map(|c| {
            let h: u32 = c.get(1).map_or(Ok(0), |m| m.as_str().parse()).ok()?;
            let m: u32 = c[2].parse().ok()?;
            let s: u32 = c[3].parse().ok()?;
            (s < 60).then_some(h * 3600 + m * 60 + s)
        })
        .collect()
}

pub fn nearest_concept(map: &[TimestampedConcept], at_s: u32) -> Option<&TimestampedConcept> {
    map.iter().min_by_key(|c| (c.at_s.abs_diff(at_s), c.at_s))
}

/// Nearest concept timestamp within the snap window.
pub fn snap(map: &[TimestampedConcept], at_s: u32) -> Option<u32> {
    nearest_concept(map, at_s).filter(|c| c.at_s.abs_diff(at_s) <= SNAP_WINDOW_S).map(|c| c.at_s)
}

pub fn build_request(query: &StudentQuery, context: &SpecialistContext) -> ModelRequest {
    match context {
        SpecialistContext::Video { concept_map, .. } => {
            let mut system = format!("{VIDEO_ROLE}\n\nConcept map:\n");
            for c in concept_map {
                system.push_str(&concept_line(c));
                system.push('\n');
            }
            let mut user = format!("Student question: {}", query.text);
            if let Some(pos) = query.video_position_s {
                user.push_str(&format!("\nCurrent video position: {}s ({})", pos, format_clock(pos)));
            }
            for t in mentioned_timestamps(&query.text) {
                if let Some(c) = nearest_concept(concept_map, t) {
                    user.push_str(&format!(
                        "\nStudent cites {}; nearest mapped segment: {}s '{}'",
                        format_clock(t),
                        c.at_s,
                        c.concept
                    ));
                }
            }
            ModelRequest::new(system).student(user).schema(SchemaTag::VideoReport)
        }
        SpecialistContext::Guidance { directive, guidance_instructions } => {
            let mut system = format!("{GUIDANCE_ROLE}\n\n{directive}\n");
            if !guidance_instructions.is_empty() {
                system.push_str("\nCheckpoint guidance notes:\n");
                for g in guidance_instructions {
                    system.push_str(&format!("- {g}\n"));
                }
            }
            let mut user = format!("Student question: {}", query.text);
            if let Some(code) = query.code_context.as_deref().filter(|c| !c.trim().is_empty()) {
                user.push_str(&format!("\nStudent code (for conceptual context only):\n{code}"));
            }
            ModelRequest::new(system).student(user).schema(SchemaTag::GuidanceReport)
        }
        SpecialistContext::Code { catalog } => {
            let mut system = format!("{CODE_ROLE}\n\nError catalog:\n");
            for k in catalog {
                system.push_str(&format!("- [{}] /{}/: {}\n", k.category, k.pattern, k.hint));
            }
            let mut user = format!("Student question: {}", query.text);
            if let Some(code) = query.code_context.as_deref().filter(|c| !c.trim().is_empty()) {
                user.push_str(&format!("\nStudent code:\n{code}"));
            }
            if let Some(err) = query.execution_error.as_deref().filter(|e| !e.trim().is_empty()) {
                user.push_str(&format!("\nExecution error:\n{err}"));
                if let Some(k) = match_catalog(catalog, err) {
                    user.push_str(&format!("\nCatalog match [{}]: {}", k.category, k.hint));
                }
            }
            ModelRequest::new(system).student(user).schema(SchemaTag::CodeReport)
        }
    }
}

#[derive(Deserialize, Serialize)]
struct RawReport {
    confidence: f64,
    relevance: Relevance,
    content: String,
    #[serde(default)]
    references: Vec<Value>,
}

fn degraded(kind: AgentKind, reason: DropReason, content: impl Into<String>) -> SpecialistReport {
    SpecialistReport {
        kind,
        confidence: 0.0,
        content: content.into(),
        references: Vec::new(),
        relevance: Relevance::NotApplicable,
        degraded: Some(reason),
    }
}

pub fn report_from_provider(
    kind: AgentKind,
    result: Result<crate::provider::ModelResponse, ProviderError>,
) -> SpecialistReport {
    let response = match result {
        Ok(r) => r,
        Err(ProviderError::Timeout { budget_ms }) => {
            return degraded(kind, DropReason::Timeout, format!("no answer within {budget_ms} ms"))
        }
        Err(ProviderError::MalformedStructuredOutput { reason, .. }) => {
            return degraded(kind, DropReason::MalformedOutput, reason)
        }
        Err(e) => return degraded(kind, DropReason::ProviderError, e.to_string()),
    };
    let Some(raw) = response.structured.and_then(|v| serde_json::from_value::<RawReport>(v).ok()) else {
        return degraded(kind, DropReason::MalformedOutput, "report did not parse");
    };
    let confidence = if raw.confidence.is_finite() { raw.confidence.clamp(0.0, 1.0) } else { 0.0 };
    SpecialistReport {
        kind,
        confidence,
        content: raw.content,
        references: raw.references.into_iter().filter_map(|v| serde_json::from_value(v).ok()).collect(),
        relevance: raw.relevance,
        degraded: None,
    }
}

/// Runs one specialist. Never fails: provider problems come back as a
/// `not_applicable` report with the reason recorded.
pub async fn run_specialist(
    provider: &dyn ModelProvider,
    query: &StudentQuery,
    context: &SpecialistContext,
) -> SpecialistReport {
    let kind = context.kind();
    if kind == AgentKind::Code && !query.has_code_scope() {
        let mut r = degraded(kind, DropReason::NotApplicable, "no code or execution error in the question");
        r.degraded = None;
        return r;
    }
    let request = build_request(query, context);
    let mut report = report_from_provider(kind, provider.complete(&request).await);
    if let SpecialistContext::Video { concept_map, .. } = context {
        ground_video_references(&mut report, query, concept_map);
    }
    report
}

/// Snaps timestamp references onto the concept map, dropping any that do not
/// correspond to a mapped segment. A timestamp cited by the student is
/// resolved to its nearest mapped segment when the report offers none.
fn ground_video_references(report: &mut SpecialistReport, query: &StudentQuery, map: &[TimestampedConcept]) {
    if report.relevance == Relevance::NotApplicable {
        return;
    }
    let mut grounded = Vec::new();
    for r in report.references.drain(..) {
        match r {
            Reference::TimestampS(t) => {
                if let Some(s) = snap(map, t) {
                    if !grounded.contains(&Reference::TimestampS(s)) {
                        grounded.push(Reference::TimestampS(s));
                    }
                }
            }
            other => grounded.push(other),
        }
    }
    if !grounded.iter().any(|r| matches!(r, Reference::TimestampS(_))) {
        if let Some(c) = mentioned_timestamps(&query.text).first().and_then(|&t| nearest_concept(map, t)) {
            grounded.push(Reference::TimestampS(c.at_s));
        }
    }
    report.references = grounded;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clock_parsing() {
        assert_eq!(mentioned_timestamps("see (30:48) and 1:02:03"), vec![1848, 3723]);
        assert_eq!(mentioned_timestamps("ratio 3:75 is not a time"), Vec::<u32>::new());
        assert_eq!(format_clock(1848), "30:48");
        assert_eq!(format_clock(3723), "1:02:03");
    }

    #[test]
    fn snapping_respects_window() {
        let map = vec![
            TimestampedConcept { at_s: 1800, concept: "a".into(), covered_by_checkpoints: vec![] },
            TimestampedConcept { at_s: 1848, concept: "b".into(), covered_by_checkpoints: vec![] },
        ];
        assert_eq!(snap(&map, 1850), Some(1848));
        assert_eq!(snap(&map, 1878), Some(1848));
        assert_eq!(snap(&map, 1879), None);
    }
}
