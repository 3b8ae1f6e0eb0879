//! Shared domain vocabulary: curriculum, checkpoints, sessions, queries and
//! telemetry events.
//!
//! Every type here is an immutable value once constructed and serializes to
//! JSON with snake_case names, integer millisecond timestamps and lowercase
//! enum strings.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Integer milliseconds since the Unix epoch, UTC.
pub type TimestampMs = i64;

/// Module ids are fixed to this range.
pub const MODULE_IDS: std::ops::RangeInclusive<u8> = 1..=5;

pub fn valid_module_id(id: u8) -> bool {
    MODULE_IDS.contains(&id)
}

/// Opaque anonymized student token. Minted by
/// [`crate::telemetry::alias::make_alias`]; never carries raw identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StudentAlias(String);

impl StudentAlias {
    /// Wraps an already-minted alias token (e.g. one read back from a store).
    pub fn from_token(token: impl Into<String>) -> Result<Self, ModelError> {
        let token = token.into();
        if token.is_empty() {
            return Err(ModelError::EmptyAlias);
        }
        Ok(Self(token))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StudentAlias {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("alias must be non-empty")]
    EmptyAlias,
    #[error("payload does not match event category {category}")]
    PayloadMismatch { category: EventCategory },
    #[error("invalid payload for {category}: {reason}")]
    InvalidPayload { category: EventCategory, reason: String },
    #[error("module id {0} outside 1..=5")]
    ModuleOutOfRange(u8),
    #[error("history must alternate student/tutor turns starting with student")]
    HistoryOrder,
    #[error("last_active_at precedes started_at")]
    ActivityBeforeStart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Student,
    Tutor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub alias: StudentAlias,
    pub module_id: u8,
    pub started_at: TimestampMs,
    pub last_active_at: TimestampMs,
    pub history: Vec<Turn>,
}

impl Session {
    pub fn new(id: String, alias: StudentAlias, module_id: u8, now: TimestampMs) -> Result<Self, ModelError> {
        if !valid_module_id(module_id) {
            return Err(ModelError::ModuleOutOfRange(module_id));
        }
        Ok(Self {
            id,
            alias,
            module_id,
            started_at: now,
            last_active_at: now,
            history: Vec::new(),
        })
    }

    /// Appends one student/tutor exchange, keeping the alternation invariant.
    pub fn record_exchange(&mut self, question: &str, answer: &str, now: TimestampMs) {
        self.history.push(Turn { role: Role::Student, text: question.to_owned() });
        self.history.push(Turn { role: Role::Tutor, text: answer.to_owned() });
        self.last_active_at = now.max(self.started_at);
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if self.last_active_at < self.started_at {
            return Err(ModelError::ActivityBeforeStart);
        }
        let alternates = self.history.iter().enumerate().all(|(i, t)| {
            t.role == if i % 2 == 0 { Role::Student } else { Role::Tutor }
        });
        if !alternates {
            return Err(ModelError::HistoryOrder);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimestampedConcept {
    pub at_s: u32,
    pub concept: String,
    #[serde(default)]
    pub covered_by_checkpoints: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    ApiMisuse,
    DeprecatedApi,
    MissingDependency,
    Mathematical,
    Syntax,
    Timeout,
    Other,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 7] = [
        ErrorCategory::ApiMisuse,
        ErrorCategory::DeprecatedApi,
        ErrorCategory::MissingDependency,
        ErrorCategory::Mathematical,
        ErrorCategory::Syntax,
        ErrorCategory::Timeout,
        ErrorCategory::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::ApiMisuse => "api_misuse",
            ErrorCategory::DeprecatedApi => "deprecated_api",
            ErrorCategory::MissingDependency => "missing_dependency",
            ErrorCategory::Mathematical => "mathematical",
            ErrorCategory::Syntax => "syntax",
            ErrorCategory::Timeout => "timeout",
            ErrorCategory::Other => "other",
        }
    }

    /// Errors raised by the quantum SDK itself rather than by Python or the
    /// environment.
    pub fn is_sdk_error(self) -> bool {
        matches!(self, ErrorCategory::ApiMisuse | ErrorCategory::DeprecatedApi)
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One entry of an error catalog: a regex over error text and its diagnosis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownError {
    pub pattern: String,
    pub category: ErrorCategory,
    pub hint: String,
}

impl KnownError {
    pub fn compile(&self) -> Result<Regex, regex::Error> {
        Regex::new(&self.pattern)
    }

    /// Returns false for patterns that do not compile; those are reported by
    /// [`validate_curriculum`].
    pub fn matches(&self, text: &str) -> bool {
        self.compile().map(|re| re.is_match(text)).unwrap_or(false)
    }
}

/// First catalog entry whose pattern matches `text`.
pub fn match_catalog<'a>(catalog: impl IntoIterator<Item = &'a KnownError>, text: &str) -> Option<&'a KnownError> {
    catalog.into_iter().find(|k| k.matches(text))
}

/// Expected output of a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OutputSpec {
    Exact { value: String },
    Numeric { expected: f64, tol: f64 },
    /// Measurement count distribution. `tol_abs` bounds the per-outcome
    /// absolute deviation; when absent it defaults to `2 * sqrt(shots)`.
    Histogram {
        counts: BTreeMap<String, u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tol_abs: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shots: Option<u64>,
    },
}

impl OutputSpec {
    pub fn histogram_tolerance(counts: &BTreeMap<String, u64>, tol_abs: Option<u64>, shots: Option<u64>) -> u64 {
        tol_abs.unwrap_or_else(|| {
            let shots = shots.unwrap_or_else(|| counts.values().sum());
            (4.0 * (shots as f64).sqrt() / 2.0).floor() as u64
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub id: String,
    pub module_id: u8,
    pub prompt: String,
    pub autograde_instructions: String,
    pub guidance_instructions: String,
    #[serde(default)]
    pub debug_catalog: Vec<KnownError>,
    pub expected_output: OutputSpec,
    #[serde(default)]
    pub approach_criteria: Vec<String>,
    /// Identifiers the prompt tells students to use; a passing-execution
    /// submission missing one is evidence of a reading issue.
    #[serde(default)]
    pub required_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LessonModule {
    pub id: u8,
    pub title: String,
    pub video_length_s: u32,
    pub concept_map: Vec<TimestampedConcept>,
    #[serde(default)]
    pub checkpoints: Vec<Checkpoint>,
}

impl LessonModule {
    /// Number of 60-second retention bins.
    pub fn bin_count(&self) -> usize {
        self.video_length_s.div_ceil(60) as usize
    }

    pub fn checkpoint(&self, id: &str) -> Option<&Checkpoint> {
        self.checkpoints.iter().find(|c| c.id == id)
    }

    /// The module's debug catalogs, in checkpoint order.
    pub fn debug_catalog(&self) -> impl Iterator<Item = &KnownError> {
        self.checkpoints.iter().flat_map(|c| c.debug_catalog.iter())
    }
}

/// The curriculum fixture document: five lesson modules plus a catalog of
/// errors that apply across modules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curriculum {
    pub modules: Vec<LessonModule>,
    #[serde(default)]
    pub error_catalog: Vec<KnownError>,
}

impl Curriculum {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn module(&self, id: u8) -> Option<&LessonModule> {
        self.modules.iter().find(|m| m.id == id)
    }

    pub fn checkpoint(&self, id: &str) -> Option<&Checkpoint> {
        self.modules.iter().find_map(|m| m.checkpoint(id))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    ModuleIdOutOfRange { module: u8 },
    DuplicateModule { module: u8 },
    ZeroLengthVideo { module: u8 },
    ConceptOutOfRange { module: u8, at_s: u32, video_length_s: u32 },
    ConceptsNotIncreasing { module: u8, at_s: u32 },
    DuplicateCheckpoint { checkpoint: String },
    CheckpointModuleMismatch { checkpoint: String, module: u8 },
    EmptyInstructions { checkpoint: String, which: &'static str },
    UnknownCoveringCheckpoint { module: u8, concept: String, checkpoint: String },
    BadPattern { pattern: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ModuleIdOutOfRange { module } => write!(f, "module id {module} outside 1..=5"),
            Violation::DuplicateModule { module } => write!(f, "module {module} defined more than once"),
            Violation::ZeroLengthVideo { module } => write!(f, "module {module} has zero-length video"),
            Violation::ConceptOutOfRange { module, at_s, video_length_s } => {
                write!(f, "module {module}: concept at {at_s}s outside video of {video_length_s}s")
            }
            Violation::ConceptsNotIncreasing { module, at_s } => {
                write!(f, "module {module}: concept map not strictly increasing at {at_s}s")
            }
            Violation::DuplicateCheckpoint { checkpoint } => write!(f, "checkpoint {checkpoint} defined more than once"),
            Violation::CheckpointModuleMismatch { checkpoint, module } => {
                write!(f, "checkpoint {checkpoint} listed under module {module} but declares another module")
            }
            Violation::EmptyInstructions { checkpoint, which } => {
                write!(f, "checkpoint {checkpoint}: {which} instructions are empty")
            }
            Violation::UnknownCoveringCheckpoint { module, concept, checkpoint } => {
                write!(f, "module {module}: concept '{concept}' covered by unknown checkpoint {checkpoint}")
            }
            Violation::BadPattern { pattern } => write!(f, "error pattern does not compile: {pattern}"),
        }
    }
}

/// Collects every invariant violation in the curriculum. Empty means valid.
pub fn validate_curriculum(modules: &[LessonModule], global_catalog: &[KnownError]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut module_ids = HashSet::new();
    let mut checkpoint_ids = HashSet::new();

    for module in modules {
        if !valid_module_id(module.id) {
            out.push(Violation::ModuleIdOutOfRange { module: module.id });
        }
        if !module_ids.insert(module.id) {
            out.push(Violation::DuplicateModule { module: module.id });
        }
        if module.video_length_s == 0 {
            out.push(Violation::ZeroLengthVideo { module: module.id });
        }
        let mut prev: Option<u32> = None;
        for concept in &module.concept_map {
            if concept.at_s >= module.video_length_s {
                out.push(Violation::ConceptOutOfRange {
                    module: module.id,
                    at_s: concept.at_s,
                    video_length_s: module.video_length_s,
                });
            }
            if prev.is_some_and(|p| concept.at_s <= p) {
                out.push(Violation::ConceptsNotIncreasing { module: module.id, at_s: concept.at_s });
            }
            prev = Some(concept.at_s);
            for cp in &concept.covered_by_checkpoints {
                if module.checkpoint(cp).is_none() {
                    out.push(Violation::UnknownCoveringCheckpoint {
                        module: module.id,
                        concept: concept.concept.clone(),
                        checkpoint: cp.clone(),
                    });
                }
            }
        }
        for cp in &module.checkpoints {
            if !checkpoint_ids.insert(cp.id.as_str()) {
                out.push(Violation::DuplicateCheckpoint { checkpoint: cp.id.clone() });
            }
            if cp.module_id != module.id {
                out.push(Violation::CheckpointModuleMismatch { checkpoint: cp.id.clone(), module: module.id });
            }
            for (which, text) in [
                ("autograde", &cp.autograde_instructions),
                ("guidance", &cp.guidance_instructions),
                ("prompt", &cp.prompt),
            ] {
                if text.trim().is_empty() {
                    out.push(Violation::EmptyInstructions { checkpoint: cp.id.clone(), which });
                }
            }
            if cp.debug_catalog.is_empty() {
                out.push(Violation::EmptyInstructions { checkpoint: cp.id.clone(), which: "debugging" });
            }
            for known in &cp.debug_catalog {
                if known.compile().is_err() {
                    out.push(Violation::BadPattern { pattern: known.pattern.clone() });
                }
            }
        }
    }
    for known in global_catalog {
        if known.compile().is_err() {
            out.push(Violation::BadPattern { pattern: known.pattern.clone() });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentQuery {
    pub session_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_context: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub execution_error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_position_s: Option<u32>,
}

impl StudentQuery {
    pub fn new(session_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            text: text.into(),
            code_context: None,
            execution_error: None,
            video_position_s: None,
        }
    }

    pub fn with_code(mut self, code: impl Into<String>) -> Self {
        self.code_context = Some(code.into());
        self
    }

    pub fn with_error(mut self, err: impl Into<String>) -> Self {
        self.execution_error = Some(err.into());
        self
    }

    pub fn at_position(mut self, s: u32) -> Self {
        self.video_position_s = Some(s);
        self
    }

    pub fn has_code_scope(&self) -> bool {
        self.code_context.as_deref().is_some_and(|c| !c.trim().is_empty())
            || self.execution_error.as_deref().is_some_and(|e| !e.trim().is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionCategory {
    StudyStrategies,
    ConceptualQuantum,
    MathematicalFormalism,
    Implementation,
    SocialExploratory,
    VideoReference,
    CrossLessonSynthesis,
}

impl QuestionCategory {
    pub const ALL: [QuestionCategory; 7] = [
        QuestionCategory::StudyStrategies,
        QuestionCategory::ConceptualQuantum,
        QuestionCategory::MathematicalFormalism,
        QuestionCategory::Implementation,
        QuestionCategory::SocialExploratory,
        QuestionCategory::VideoReference,
        QuestionCategory::CrossLessonSynthesis,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionCategory::StudyStrategies => "study_strategies",
            QuestionCategory::ConceptualQuantum => "conceptual_quantum",
            QuestionCategory::MathematicalFormalism => "mathematical_formalism",
            QuestionCategory::Implementation => "implementation",
            QuestionCategory::SocialExploratory => "social_exploratory",
            QuestionCategory::VideoReference => "video_reference",
            QuestionCategory::CrossLessonSynthesis => "cross_lesson_synthesis",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventCategory {
    VideoPlayback,
    CodeExecution,
    ChatMessage,
    CheckpointSubmission,
    SessionManagement,
}

impl fmt::Display for EventCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EventCategory::VideoPlayback => "video_playback",
            EventCategory::CodeExecution => "code_execution",
            EventCategory::ChatMessage => "chat_message",
            EventCategory::CheckpointSubmission => "checkpoint_submission",
            EventCategory::SessionManagement => "session_management",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaybackAction {
    Seek,
    Play,
    Pause,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionAction {
    Start,
    End,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoPayload {
    pub position_s: u32,
    pub action: PlaybackAction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodePayload {
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_category: Option<ErrorCategory>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatPayload {
    pub question_category: QuestionCategory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointPayload {
    pub checkpoint_id: String,
    pub pass: bool,
    #[serde(default)]
    pub output_ok: bool,
    #[serde(default)]
    pub approach_ok: bool,
    /// Whether the submitted code ran without a runtime error.
    #[serde(default = "default_true")]
    pub execution_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_category: Option<ErrorCategory>,
    /// The submission omitted an identifier the prompt asked for.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub name_mismatch: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionPayload {
    pub action: SessionAction,
}

/// Category-specific event body. The category is implied by the variant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventPayload {
    Video(VideoPayload),
    Code(CodePayload),
    Chat(ChatPayload),
    Checkpoint(CheckpointPayload),
    Session(SessionPayload),
}

impl EventPayload {
    pub fn category(&self) -> EventCategory {
        match self {
            EventPayload::Video(_) => EventCategory::VideoPlayback,
            EventPayload::Code(_) => EventCategory::CodeExecution,
            EventPayload::Chat(_) => EventCategory::ChatMessage,
            EventPayload::Checkpoint(_) => EventCategory::CheckpointSubmission,
            EventPayload::Session(_) => EventCategory::SessionManagement,
        }
    }

    fn to_value(&self) -> serde_json::Value {
        let v = match self {
            EventPayload::Video(p) => serde_json::to_value(p),
            EventPayload::Code(p) => serde_json::to_value(p),
            EventPayload::Chat(p) => serde_json::to_value(p),
            EventPayload::Checkpoint(p) => serde_json::to_value(p),
            EventPayload::Session(p) => serde_json::to_value(p),
        };
        v.expect("payload structs always serialize")
    }

    fn from_value(category: EventCategory, value: serde_json::Value) -> Result<Self, ModelError> {
        let bad = |e: serde_json::Error| ModelError::InvalidPayload { category, reason: e.to_string() };
        Ok(match category {
            EventCategory::VideoPlayback => EventPayload::Video(serde_json::from_value(value).map_err(bad)?),
            EventCategory::CodeExecution => {
                let p: CodePayload = serde_json::from_value(value).map_err(bad)?;
                if p.success == p.error_category.is_some() {
                    return Err(ModelError::InvalidPayload {
                        category,
                        reason: "error_category must be present iff success is false".into(),
                    });
                }
                EventPayload::Code(p)
            }
            EventCategory::ChatMessage => EventPayload::Chat(serde_json::from_value(value).map_err(bad)?),
            EventCategory::CheckpointSubmission => {
                EventPayload::Checkpoint(serde_json::from_value(value).map_err(bad)?)
            }
            EventCategory::SessionManagement => EventPayload::Session(serde_json::from_value(value).map_err(bad)?),
        })
    }
}

/// One telemetry record. `event_id` is the caller-generated idempotency key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "EventWire", try_from = "EventWire")]
pub struct TelemetryEvent {
    pub event_id: String,
    pub alias: StudentAlias,
    pub module_id: u8,
    pub at: TimestampMs,
    pub payload: EventPayload,
}

impl TelemetryEvent {
    pub fn category(&self) -> EventCategory {
        self.payload.category()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("events always serialize")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventWire {
    event_id: String,
    alias: StudentAlias,
    category: EventCategory,
    module_id: u8,
    at: TimestampMs,
    payload: serde_json::Value,
}

impl From<TelemetryEvent> for EventWire {
    fn from(e: TelemetryEvent) -> Self {
        EventWire {
            category: e.category(),
            payload: e.payload.to_value(),
            event_id: e.event_id,
            alias: e.alias,
            module_id: e.module_id,
            at: e.at,
        }
    }
}

impl TryFrom<EventWire> for TelemetryEvent {
    type Error = ModelError;

    fn try_from(w: EventWire) -> Result<Self, Self::Error> {
        if !valid_module_id(w.module_id) {
            return Err(ModelError::ModuleOutOfRange(w.module_id));
        }
        if w.alias.as_str().is_empty() {
            return Err(ModelError::EmptyAlias);
        }
        let payload = EventPayload::from_value(w.category, w.payload).map_err(|e| match e {
            ModelError::InvalidPayload { category, .. } => ModelError::PayloadMismatch { category },
            other => other,
        })?;
        Ok(TelemetryEvent { event_id: w.event_id, alias: w.alias, module_id: w.module_id, at: w.at, payload })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryShare {
    pub count: u64,
    pub percent: u64,
}

/// Counts chat questions per category with whole-number percentages.
/// Non-chat events are ignored.
pub fn question_category_distribution<'a>(
    events: impl IntoIterator<Item = &'a TelemetryEvent>,
) -> BTreeMap<QuestionCategory, CategoryShare> {
    let mut counts: BTreeMap<QuestionCategory, u64> = BTreeMap::new();
    for e in events {
        if let EventPayload::Chat(c) = &e.payload {
            *counts.entry(c.question_category).or_default() += 1;
        }
    }
    distribution_from_counts(&counts)
}

pub fn distribution_from_counts(counts: &BTreeMap<QuestionCategory, u64>) -> BTreeMap<QuestionCategory, CategoryShare> {
    let total: u64 = counts.values().sum();
    if total == 0 {
        return BTreeMap::new();
    }
    counts
        .iter()
        .filter(|(_, &n)| n > 0)
        .map(|(&cat, &count)| {
            // round(100 * count / total), half up
            let percent = (200 * count + total) / (2 * total);
            (cat, CategoryShare { count, percent })
        })
        .collect()
}
