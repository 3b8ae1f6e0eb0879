//! Question labelling for telemetry.

use std::sync::LazyLock;

use regex::Regex;

use crate::model::QuestionCategory;
use crate::provider::{ModelProvider, ModelRequest, SchemaTag};

const CLASSIFIER_ROLE: &str = "Classify the student's question into exactly one category: \
study_strategies (how to approach, pace or prepare), conceptual_quantum (quantum concepts), \
mathematical_formalism (proofs, matrices, linear algebra), implementation (code, Qiskit, errors), \
social_exploratory (greetings, off-topic, curiosity), video_reference (a lecture moment), \
cross_lesson_synthesis (connecting modules).";

struct Rule {
    category: QuestionCategory,
    pattern: Regex,
}

/// Ordered keyword rubric; the first rule that fires wins.
static RUBRIC: LazyLock<Vec<Rule>> = LazyLock::new(|| {
    let rule = |category, pattern: &str| Rule { category, pattern: Regex::new(pattern).expect("rubric pattern") };
    vec![
        rule(QuestionCategory::VideoReference, r"(?i)\b\d{1,2}:\d{2}\b|\b(video|lecture|minute mark|timestamp)\b"),
        rule(
            QuestionCategory::StudyStrategies,
            r"(?i)\b(pace|pacing|study|prepare|schedule|resources?|how should i|where should i start|exam|review)\b",
        ),
        rule(
            QuestionCategory::CrossLessonSynthesis,
            r"(?i)\b(previous module|earlier module|connect|relate|relationship between|compared? to module|across modules|module \d+ and module \d+)\b",
        ),
        rule(
            QuestionCategory::Implementation,
            r"(?i)\b(qiskit\w*|code|\w*error|traceback|import|python|numpy|statevector|quantumcircuit|circuit\.|function call|syntax)\b",
        ),
        rule(
            QuestionCategory::MathematicalFormalism,
            r"(?i)\b(matrix|matrices|unitary|tensor|eigen\w*|proof|prove|linear|basis|inner product|bijection|permutation|the function f|unique|vector space|norm)\b",
        ),
        rule(
            QuestionCategory::ConceptualQuantum,
            r"(?i)\b(superposition|entangle\w*|measurement|measure|qubits?|quantum|bell|interference|collapse|teleportation|no-cloning|state)\b",
        ),
    ]
});

/// Deterministic fallback labelling. Text with no content signal is social.
pub fn keyword_category(text: &str) -> QuestionCategory {
    RUBRIC
        .iter()
        .find(|r| r.pattern.is_match(text))
        .map(|r| r.category)
        .unwrap_or(QuestionCategory::SocialExploratory)
}

/// Asks the provider for a label and falls back to the keyword rubric on
/// any provider problem, so a label is always produced.
pub async fn classify_question(text: &str, provider: &dyn ModelProvider) -> QuestionCategory {
    let request = ModelRequest::new(CLASSIFIER_ROLE).student(text).schema(SchemaTag::QuestionCategory);
    match provider.complete(&request).await {
        Ok(resp) => resp
            .structured
            .as_ref()
            .and_then(|v| v.get("category"))
            .and_then(|c| c.as_str())
            .and_then(QuestionCategory::parse)
            .unwrap_or_else(|| keyword_category(text)),
        Err(_) => keyword_category(text),
    }
}
