//! Dual-criteria checkpoint grading and debugging hints.

pub mod compare;
pub mod screen;

use std::collections::HashMap;
use std::sync::{Arc, LazyLock, Mutex};

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tokio::sync::OnceCell;

pub use compare::{compare_output, Comparison};
pub use screen::{screen_hardcode, ScreenResult};

use crate::model::{
    match_catalog, Checkpoint, CheckpointPayload, ErrorCategory, EventPayload, KnownError, StudentAlias,
};
use crate::provider::{ModelProvider, ModelRequest, ProviderError, SchemaTag};
use crate::sandbox::ExecutionResult;
use crate::telemetry::{new_event, EventSink};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub checkpoint_id: String,
    pub session_id: String,
    pub source: String,
    pub execution: ExecutionResult,
}

impl Submission {
    /// Stable id over what is being graded, used to collapse duplicate
    /// in-flight submissions.
    pub fn submission_id(&self) -> String {
        let mut h = Sha256::new();
        for part in [&self.checkpoint_id, &self.session_id, &self.source] {
            h.update(part.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradeResult {
    pub pass: bool,
    pub output_ok: bool,
    pub approach_ok: bool,
    pub reasoning_output: String,
    pub reasoning_approach: String,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GradeError {
    #[error("submission source is empty")]
    EmptySource,
    #[error("submission is for checkpoint {submitted}, not {checkpoint}")]
    CheckpointMismatch { submitted: String, checkpoint: String },
    /// Retryable; the attempt is not recorded.
    #[error("grading unavailable: {0}")]
    GradingUnavailable(ProviderError),
}

const APPROACH_FRAME: &str = "Judge only the implementation approach of the submitted code. \
Whether the printed output is right is checked separately by the grader, so a right answer does not \
make an approach acceptable. Reject code that hardcodes results or skips the construction the \
criteria ask for. Accept any implementation that satisfies the criteria.";

fn approach_request(submission: &Submission, checkpoint: &Checkpoint) -> ModelRequest {
    let mut system = format!("{}\n\n{APPROACH_FRAME}\n", checkpoint.autograde_instructions.trim());
    if !checkpoint.approach_criteria.is_empty() {
        system.push_str("Approach criteria:\n");
        for c in &checkpoint.approach_criteria {
            system.push_str(&format!("- {c}\n"));
        }
    }
    system.push_str(&format!("Checkpoint: {}", checkpoint.id));
    ModelRequest::new(system).student(submission.source.clone()).schema(SchemaTag::GradeVerdict)
}

/// Grades one submission. Output correctness is decided here; only the
/// approach judgment goes to the provider, and a screen hit skips it.
pub async fn grade(
    submission: &Submission,
    checkpoint: &Checkpoint,
    provider: &dyn ModelProvider,
) -> Result<GradeResult, GradeError> {
    if submission.source.trim().is_empty() {
        return Err(GradeError::EmptySource);
    }
    if submission.checkpoint_id != checkpoint.id {
        return Err(GradeError::CheckpointMismatch {
            submitted: submission.checkpoint_id.clone(),
            checkpoint: checkpoint.id.clone(),
        });
    }

    let exec = &submission.execution;
    let (output_ok, reasoning_output) = if exec.exit_ok {
        let c = compare_output(&exec.stdout, &checkpoint.expected_output);
        (c.ok, c.explanation)
    } else {
        let category = exec.error_category.unwrap_or(ErrorCategory::Other);
        (false, format!("execution failed with a {category} error, so there is no output to check"))
    };

    let screened = screen_hardcode(&submission.source, &checkpoint.expected_output, &checkpoint.approach_criteria);
    let (approach_ok, reasoning_approach) = if screened.flagged {
        (false, format!("rejected by the static screen: {}", screened.evidence))
    } else {
        let resp = provider
            .complete(&approach_request(submission, checkpoint))
            .await
            .map_err(GradeError::GradingUnavailable)?;
        let verdict = resp.structured.unwrap_or_default();
        let ok = verdict.get("approach_ok").and_then(|v| v.as_bool()).ok_or_else(|| {
            GradeError::GradingUnavailable(ProviderError::MalformedStructuredOutput {
                schema: SchemaTag::GradeVerdict,
                reason: "missing approach_ok".into(),
            })
        })?;
        let reasoning = verdict.get("reasoning").and_then(|v| v.as_str()).unwrap_or("").trim().to_owned();
        let reasoning = if reasoning.is_empty() {
            if ok { "approach meets the criteria".to_owned() } else { "approach does not meet the criteria".to_owned() }
        } else {
            reasoning
        };
        (ok, reasoning)
    };

    Ok(GradeResult { pass: output_ok && approach_ok, output_ok, approach_ok, reasoning_output, reasoning_approach })
}

/// Required identifiers absent from the source.
pub fn missing_names<'a>(source: &str, checkpoint: &'a Checkpoint) -> Vec<&'a str> {
    checkpoint
        .required_names
        .iter()
        .filter(|name| {
            !Regex::new(&format!(r"\b{}\b", regex::escape(name))).map(|re| re.is_match(source)).unwrap_or(false)
        })
        .map(String::as_str)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HintSource {
    /// Provider text anchored on a catalog entry.
    Anchored,
    /// Catalog hint alone, used when the provider failed or overreached.
    Catalog,
    /// Provider diagnosis with no catalog match.
    Provider,
    /// Nothing matched and the provider failed.
    Generic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebugHint {
    pub text: String,
    pub category: ErrorCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub escalation: Option<String>,
    pub source: HintSource,
}

pub const INFRASTRUCTURE_ESCALATION: &str =
    "infrastructure-level: the execution environment is missing a package. This is not a mistake in your code; course staff have been notified.";

const HINT_FRAME: &str = "You are helping a student debug a checkpoint exercise. Give a short hint \
that points at the faulty construct. Never write a complete solution and never include more than \
three lines of code.";

const GENERIC_HINT: &str =
    "Read the last line of the traceback first: it names the exception and usually the construct that raised it.";

static CODE_BLOCK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)```[^\n]*\n(.*?)```").expect("fence pattern"));

/// True when the text carries a code block long enough to be a solution.
pub fn contains_solution_block(text: &str) -> bool {
    CODE_BLOCK
        .captures_iter(text)
        .any(|c| c[1].lines().filter(|l| !l.trim().is_empty()).count() > 3)
}

/// Hint for a failed run: checkpoint catalog first, then the course-wide
/// catalog, then a free provider diagnosis.
pub async fn debug_hint(
    submission: &Submission,
    checkpoint: &Checkpoint,
    global_catalog: &[KnownError],
    provider: &dyn ModelProvider,
) -> DebugHint {
    let stderr = &submission.execution.stderr;
    let known = match_catalog(&checkpoint.debug_catalog, stderr).or_else(|| match_catalog(global_catalog, stderr));

    let mut system = format!("{}\n\n{HINT_FRAME}\n", checkpoint.guidance_instructions.trim());
    if let Some(k) = known {
        system.push_str(&format!("Known error ({}): {}\n", k.category, k.hint));
    }
    system.push_str(&format!("Checkpoint: {}", checkpoint.id));
    let request = ModelRequest::new(system)
        .student(format!("My code:\n{}\n\nError:\n{}", submission.source, stderr));
    let reply = provider.complete(&request).await.ok().map(|r| r.text.trim().to_owned()).filter(|t| !t.is_empty());

    let (text, source, category) = match (known, reply) {
        (Some(k), Some(t)) if !contains_solution_block(&t) => (t, HintSource::Anchored, k.category),
        (Some(k), _) => (k.hint.clone(), HintSource::Catalog, k.category),
        (None, Some(t)) if !contains_solution_block(&t) => (t, HintSource::Provider, ErrorCategory::Other),
        (None, _) => (GENERIC_HINT.to_owned(), HintSource::Generic, ErrorCategory::Other),
    };
    let escalation = (category == ErrorCategory::MissingDependency).then(|| INFRASTRUCTURE_ESCALATION.to_owned());
    DebugHint { text, category, escalation, source }
}

type Slot = Arc<OnceCell<Result<GradeResult, GradeError>>>;

/// Grades submissions and records the outcome as a telemetry event.
/// Identical submissions that arrive while one is being graded share its
/// evaluation.
pub struct AutogradingService {
    provider: Arc<dyn ModelProvider>,
    events: Arc<dyn EventSink>,
    in_flight: Mutex<HashMap<String, Slot>>,
}

impl AutogradingService {
    pub fn new(provider: Arc<dyn ModelProvider>, events: Arc<dyn EventSink>) -> Self {
        Self { provider, events, in_flight: Mutex::new(HashMap::new()) }
    }

    pub async fn submit(
        &self,
        alias: &StudentAlias,
        submission: &Submission,
        checkpoint: &Checkpoint,
    ) -> Result<GradeResult, GradeError> {
        let id = submission.submission_id();
        let (slot, leader) = {
            let mut map = self.in_flight.lock().expect("in-flight lock");
            match map.get(&id) {
                Some(slot) => (slot.clone(), false),
                None => {
                    let slot: Slot = Arc::default();
                    map.insert(id.clone(), slot.clone());
                    (slot, true)
                }
            }
        };
        let outcome = slot.get_or_init(|| grade(submission, checkpoint, self.provider.as_ref())).await.clone();
        if leader {
            self.in_flight.lock().expect("in-flight lock").remove(&id);
            if let Ok(result) = &outcome {
                self.record(alias, submission, checkpoint, result);
            }
        }
        outcome
    }

    fn record(&self, alias: &StudentAlias, submission: &Submission, checkpoint: &Checkpoint, result: &GradeResult) {
        let exec = &submission.execution;
        let payload = CheckpointPayload {
            checkpoint_id: checkpoint.id.clone(),
            pass: result.pass,
            output_ok: result.output_ok,
            approach_ok: result.approach_ok,
            execution_ok: exec.exit_ok,
            error_category: if exec.exit_ok { None } else { exec.error_category },
            name_mismatch: !missing_names(&submission.source, checkpoint).is_empty(),
        };
        self.events.emit(new_event(alias.clone(), checkpoint.module_id, EventPayload::Checkpoint(payload)));
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.lock().expect("in-flight lock").len()
    }
}
