//! Instructor-facing question answering over pre-aggregated results.
//!
//! The agent maps a question onto one of a closed set of templates, reads
//! the matching records from an [`AnalyticsSnapshot`] and has the provider
//! narrate them. It never sees raw events.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, LazyLock};

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::engine::{Archetype, DeadZone, Findings};
use crate::model::{distribution_from_counts, valid_module_id, Curriculum, QuestionCategory};
use crate::provider::{ModelProvider, ModelRequest, SchemaTag};
use crate::telemetry::aggregate::{AggregateSummary, CodeStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryTemplate {
    EngagementByModule,
    DeadZones,
    ArchetypeOverview,
    CodeFailureBreakdown,
    CheckpointOutcomes,
    QuestionCategoryMix,
}

impl QueryTemplate {
    pub const ALL: [QueryTemplate; 6] = [
        QueryTemplate::EngagementByModule,
        QueryTemplate::DeadZones,
        QueryTemplate::ArchetypeOverview,
        QueryTemplate::CodeFailureBreakdown,
        QueryTemplate::CheckpointOutcomes,
        QueryTemplate::QuestionCategoryMix,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QueryTemplate::EngagementByModule => "engagement_by_module",
            QueryTemplate::DeadZones => "dead_zones",
            QueryTemplate::ArchetypeOverview => "archetype_overview",
            QueryTemplate::CodeFailureBreakdown => "code_failure_breakdown",
            QueryTemplate::CheckpointOutcomes => "checkpoint_outcomes",
            QueryTemplate::QuestionCategoryMix => "question_category_mix",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }

    fn menu_entry(self) -> &'static str {
        match self {
            QueryTemplate::EngagementByModule => "engagement with a module",
            QueryTemplate::DeadZones => "points where students stop watching lecture videos",
            QueryTemplate::ArchetypeOverview => "how learners group by behavior",
            QueryTemplate::CodeFailureBreakdown => "code execution success and failure types",
            QueryTemplate::CheckpointOutcomes => "checkpoint pass rates",
            QueryTemplate::QuestionCategoryMix => "what kinds of questions students ask the tutor",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateQuery {
    pub template: QueryTemplate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub module: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefusalReason {
    IndividualData,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    Query(TemplateQuery),
    Refused(RefusalReason),
    Clarify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructorAnswer {
    pub narrative: String,
    pub data_basis: Vec<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refusal: Option<RefusalReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<TemplateQuery>,
    #[serde(default)]
    pub needs_clarification: bool,
}

/// Read-only view of the aggregate artifacts. Every accessor counts as a
/// data read.
pub struct AnalyticsSnapshot {
    summary: AggregateSummary,
    findings: Findings,
    titles: BTreeMap<u8, String>,
    checkpoint_modules: BTreeMap<String, u8>,
    reads: AtomicU64,
}

impl AnalyticsSnapshot {
    pub fn new(summary: AggregateSummary, findings: Findings, curriculum: &Curriculum) -> Self {
        Self {
            summary,
            findings,
            titles: curriculum.modules.iter().map(|m| (m.id, m.title.clone())).collect(),
            checkpoint_modules: curriculum
                .modules
                .iter()
                .flat_map(|m| m.checkpoints.iter().map(move |c| (c.id.clone(), m.id)))
                .collect(),
            reads: AtomicU64::new(0),
        }
    }

    pub fn summary(&self) -> &AggregateSummary {
        self.reads.fetch_add(1, Ordering::Relaxed);
        &self.summary
    }

    pub fn findings(&self) -> &Findings {
        self.reads.fetch_add(1, Ordering::Relaxed);
        &self.findings
    }

    pub fn data_reads(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }
}

static PRIVACY_GUARD: LazyLock<Vec<Regex>> = LazyLock::new(|| {
    [
        r"(?i:\bstudent)\s+[A-Z0-9][\w'-]*",
        r"(?i)\b(this|that|which|each|particular|specific|individual|one)\s+(student|learner)\b",
        r"(?i)\balias(es)?\b",
        r"(?i)\btranscripts?\b",
        r"(?i)\b(per-student|individuals?|by name|student ids?)\b",
    ]
    .iter()
    .map(|p| Regex::new(p).expect("guard pattern"))
    .collect()
});

static HEXISH: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b[0-9a-fA-F]{4,}\b").expect("hex pattern"));
static MODULE_REF: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bmodule\s*(\d+)\b").expect("module pattern"));
static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+(?:\.\d+)?").expect("number pattern"));
static ALIAS_LIKE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b[0-9a-f]{16}\b").expect("alias pattern"));

/// Deterministic guard for questions that target individual students.
pub fn targets_individual(question: &str) -> bool {
    if PRIVACY_GUARD.iter().any(|re| re.is_match(question)) {
        return true;
    }
    // identifier-looking tokens mixing digits and letters, e.g. "a1b2"
    HEXISH.find_iter(question).any(|m| {
        let t = m.as_str();
        t.chars().any(|c| c.is_ascii_digit()) && t.chars().any(|c| c.is_ascii_alphabetic())
    })
}

pub fn clarification_menu() -> String {
    let items: Vec<&str> = QueryTemplate::ALL.iter().map(|t| t.menu_entry()).collect();
    format!("I can answer questions about: {}. Which of these would you like?", items.join("; "))
}

pub const REFUSAL_TEXT: &str =
    "I can only report patterns across the class. Information about individual students is not available here.";

const INTENT_ROLE: &str = "Map the instructor's question to one analytics template. Templates: \
engagement_by_module (how students engaged with a module), dead_zones (where students stop watching \
lecture video), archetype_overview (groups of learner behavior), code_failure_breakdown (code success \
rates and error types), checkpoint_outcomes (checkpoint pass rates), question_category_mix (what students \
ask the tutor). Answer \"unknown\" when none fits. Include \"module\" when the question names one.";

const NARRATOR_ROLE: &str = "You narrate classroom analytics for an instructor. Use only the numbers in \
the data below, exactly as given, and do not compute new figures. Describe patterns across the class; \
never mention identifiers of individual students.";

pub async fn resolve_intent(question: &str, provider: &dyn ModelProvider) -> Resolution {
    if targets_individual(question) {
        return Resolution::Refused(RefusalReason::IndividualData);
    }
    if question.trim().is_empty() {
        return Resolution::Clarify;
    }
    let request = ModelRequest::new(INTENT_ROLE).student(question).schema(SchemaTag::InstructorIntent);
    let Ok(resp) = provider.complete(&request).await else {
        return Resolution::Clarify;
    };
    let structured = resp.structured.unwrap_or_default();
    let Some(template) = structured.get("template").and_then(Value::as_str).and_then(QueryTemplate::parse) else {
        return Resolution::Clarify;
    };
    let module = structured
        .get("module")
        .and_then(Value::as_u64)
        .and_then(|m| u8::try_from(m).ok())
        .or_else(|| MODULE_REF.captures(question).and_then(|c| c[1].parse().ok()))
        .filter(|&m| valid_module_id(m));
    Resolution::Query(TemplateQuery { template, module })
}

fn numbers_in_value(v: &Value, out: &mut Vec<f64>) {
    match v {
        Value::Number(n) => out.extend(n.as_f64()),
        Value::String(s) => out.extend(NUMBER.find_iter(s).filter_map(|m| m.as_str().parse::<f64>().ok())),
        Value::Array(items) => items.iter().for_each(|i| numbers_in_value(i, out)),
        Value::Object(map) => map.iter().for_each(|(k, i)| {
            out.extend(NUMBER.find_iter(k).filter_map(|m| m.as_str().parse::<f64>().ok()));
            numbers_in_value(i, out)
        }),
        _ => {}
    }
}

/// Numbers in `narrative` that do not occur anywhere in `data_basis`.
pub fn uncontained_numbers(narrative: &str, data_basis: &[Value]) -> Vec<String> {
    let mut known = Vec::new();
    data_basis.iter().for_each(|v| numbers_in_value(v, &mut known));
    NUMBER
        .find_iter(narrative)
        .filter(|m| {
            let x: f64 = m.as_str().parse().unwrap_or(f64::NAN);
            !known.iter().any(|k| (k - x).abs() < 1e-9)
        })
        .map(|m| m.as_str().to_owned())
        .collect()
}

fn mentions_alias(text: &str, summary: &AggregateSummary) -> bool {
    ALIAS_LIKE.is_match(text) || summary.per_alias.keys().any(|a| text.contains(a.as_str()))
}

fn label(s: &str) -> String {
    s.replace('_', " ")
}

fn minutes(s: u32) -> f64 {
    (s as f64 / 6.0).round() / 10.0
}

fn pct(n: u64, d: u64) -> Option<f64> {
    (d > 0).then(|| (1000.0 * n as f64 / d as f64).round() / 10.0)
}

fn dead_zone_record(z: &DeadZone) -> Value {
    json!({
        "record": "dead_zone",
        "module_id": z.module_id,
        "dropoff_at_s": z.dropoff_at_s,
        "dropoff_minute": minutes(z.dropoff_at_s),
        "uncovered_from_s": z.uncovered_from_s,
        "uncovered_from_minute": minutes(z.uncovered_from_s),
        "uncovered_concepts": z.uncovered_concepts,
        "severity": z.severity,
        "severity_pct": (z.severity * 1000.0).round() / 10.0,
    })
}

fn dead_zone_sentence(z: &DeadZone) -> String {
    format!(
        "In Module {}, viewing drops sharply at minute {} ({}% of peak viewers lost), and the content from minute {} onward ({}) is not covered by any checkpoint.",
        z.module_id,
        minutes(z.dropoff_at_s),
        (z.severity * 1000.0).round() / 10.0,
        minutes(z.uncovered_from_s),
        z.uncovered_concepts.join(", "),
    )
}

fn code_record(scope: &str, module: Option<u8>, s: &CodeStats) -> Value {
    let mut v = json!({
        "record": "code_stats",
        "scope": scope,
        "total": s.total,
        "successes": s.successes,
        "success_rate_pct": s.success_rate_pct(),
        "errors": s.errors.iter().map(|(c, n)| (c.as_str().to_owned(), *n)).collect::<BTreeMap<_, _>>(),
    });
    if let Some(m) = module {
        v["module_id"] = json!(m);
    }
    v
}

fn code_sentence(what: &str, s: &CodeStats) -> String {
    match s.success_rate_pct() {
        Some(rate) => format!("{what}, {} of {} code executions succeeded ({rate:.1}%).", s.successes, s.total),
        None => format!("{what}, no code executions were recorded."),
    }
}

fn error_list(errors: &BTreeMap<crate::model::ErrorCategory, u64>) -> String {
    errors.iter().map(|(c, n)| format!("{n} {}", label(c.as_str()))).collect::<Vec<_>>().join(", ")
}

/// Template records plus a deterministic narrative over exactly those
/// records.
fn fetch(q: TemplateQuery, snap: &AnalyticsSnapshot) -> (Vec<Value>, String) {
    let summary = snap.summary();
    let findings = snap.findings();
    let in_scope = |m: u8| q.module.is_none_or(|want| want == m);
    let mut basis = Vec::new();
    let mut lines = Vec::new();
    match q.template {
        QueryTemplate::EngagementByModule => {
            for (&m, ms) in summary.per_module.iter().filter(|(m, _)| in_scope(**m)) {
                let chats: u64 = ms.chat_category_counts.values().sum();
                let attempts: u64 = ms.checkpoint_stats.values().map(|c| c.attempts).sum();
                let peak = ms.video_retention.iter().copied().max().unwrap_or(0);
                let title = snap.titles.get(&m).cloned().unwrap_or_default();
                basis.push(json!({
                    "record": "module_engagement",
                    "module_id": m,
                    "title": title,
                    "video_event_count": ms.video_event_count,
                    "peak_viewers": peak,
                    "code_executions": ms.code_stats.total,
                    "code_success_rate_pct": ms.code_stats.success_rate_pct(),
                    "chat_count": chats,
                    "checkpoint_attempts": attempts,
                }));
                let rate = ms.code_stats.success_rate_pct().map(|r| format!(" ({r:.1}% successful)")).unwrap_or_default();
                lines.push(format!(
                    "Module {m} ({title}): {} video events with up to {peak} viewers at once, {} code executions{rate}, {chats} tutor questions and {attempts} checkpoint attempts.",
                    ms.video_event_count, ms.code_stats.total
                ));
                for z in findings.dead_zones.iter().filter(|z| z.module_id == m) {
                    basis.push(dead_zone_record(z));
                    lines.push(dead_zone_sentence(z));
                }
            }
        }
        QueryTemplate::DeadZones => {
            for z in findings.dead_zones.iter().filter(|z| in_scope(z.module_id)) {
                basis.push(dead_zone_record(z));
                lines.push(dead_zone_sentence(z));
            }
            if basis.is_empty() {
                basis.push(json!({"record": "dead_zones", "count": 0}));
                lines.push("No dead zones were detected: wherever viewing drops off, the remaining content is covered by checkpoints.".into());
            }
        }
        QueryTemplate::ArchetypeOverview => {
            let counts = findings.archetype_counts();
            let mut rec = json!({"record": "archetype_counts", "cohort_size": findings.archetypes.len()});
            let mut parts = Vec::new();
            for a in Archetype::RULES.into_iter().chain([Archetype::Unclassified]) {
                let n = counts.get(&a).copied().unwrap_or(0);
                rec[a.as_str()] = json!(n);
                parts.push(format!("{n} {}", label(a.as_str())));
            }
            basis.push(rec);
            lines.push(format!("Across {} students: {}.", findings.archetypes.len(), parts.join(", ")));
        }
        QueryTemplate::CodeFailureBreakdown => {
            match q.module {
                None => {
                    let all = summary.overall_code_stats();
                    basis.push(code_record("overall", None, &all));
                    lines.push(code_sentence("Overall", &all));
                }
                Some(m) => {
                    let ms = summary.per_module.get(&m).cloned().unwrap_or_default();
                    let mut rec = code_record("module", Some(m), &ms.code_stats);
                    let weeks: Vec<Value> = ms
                        .code_by_week
                        .iter()
                        .map(|(w, s)| json!({"week": w + 1, "total": s.total, "successes": s.successes, "success_rate_pct": s.success_rate_pct()}))
                        .collect();
                    rec["by_week"] = Value::Array(weeks);
                    basis.push(rec);
                    lines.push(code_sentence(&format!("In Module {m}"), &ms.code_stats));
                    for (w, s) in &ms.code_by_week {
                        if let Some(r) = s.success_rate_pct() {
                            lines.push(format!("Week {}: {} of {} succeeded ({r:.1}%).", w + 1, s.successes, s.total));
                        }
                    }
                }
            }
            for f in findings.failure_breakdown.iter().filter(|f| in_scope(f.module_id)) {
                basis.push(json!({
                    "record": "module_failures",
                    "module_id": f.module_id,
                    "by_category": f.by_category.iter().map(|(c, n)| (c.as_str().to_owned(), *n)).collect::<BTreeMap<_, _>>(),
                    "comprehension": f.comprehension,
                    "conceptual": f.conceptual,
                }));
                let mut s = format!("Module {} failures: {}", f.module_id, error_list(&f.by_category));
                if f.by_category.is_empty() {
                    s = format!("Module {} failures:", f.module_id);
                }
                if f.comprehension + f.conceptual > 0 {
                    s.push_str(&format!(
                        "; checkpoint failures include {} reading-comprehension and {} conceptual or implementation errors",
                        f.comprehension, f.conceptual
                    ));
                }
                s.push('.');
                lines.push(s);
            }
        }
        QueryTemplate::CheckpointOutcomes => {
            for (&m, ms) in summary.per_module.iter().filter(|(m, _)| in_scope(**m)) {
                for (id, cs) in &ms.checkpoint_stats {
                    let module_id = snap.checkpoint_modules.get(id).copied().unwrap_or(m);
                    basis.push(json!({
                        "record": "checkpoint",
                        "checkpoint_id": id,
                        "module_id": module_id,
                        "attempts": cs.attempts,
                        "passes": cs.passes,
                        "pass_rate_pct": pct(cs.passes, cs.attempts),
                    }));
                    if let Some(r) = pct(cs.passes, cs.attempts) {
                        lines.push(format!("Checkpoint {id}: {} of {} attempts passed ({r:.1}%).", cs.passes, cs.attempts));
                    }
                }
                let f = &ms.checkpoint_failures;
                if f.comprehension + f.conceptual + f.other > 0 {
                    basis.push(json!({
                        "record": "checkpoint_failures",
                        "module_id": m,
                        "comprehension": f.comprehension,
                        "conceptual": f.conceptual,
                        "other": f.other,
                    }));
                    lines.push(format!(
                        "Module {m} checkpoint failures: {} reading-comprehension, {} conceptual or implementation, {} other.",
                        f.comprehension, f.conceptual, f.other
                    ));
                }
            }
            if basis.is_empty() {
                lines.push("No checkpoint submissions have been recorded yet.".into());
            }
        }
        QueryTemplate::QuestionCategoryMix => {
            let counts: BTreeMap<QuestionCategory, u64> = match q.module {
                None => summary.chat_category_counts(),
                Some(m) => summary.per_module.get(&m).map(|ms| ms.chat_category_counts.clone()).unwrap_or_default(),
            };
            let total: u64 = counts.values().sum();
            basis.push(json!({"record": "chat_total", "total": total, "module_id": q.module}));
            let mut dist: Vec<_> = distribution_from_counts(&counts).into_iter().collect();
            dist.sort_by(|a, b| b.1.count.cmp(&a.1.count).then(a.0.cmp(&b.0)));
            let mut parts = Vec::new();
            for (c, share) in dist {
                basis.push(json!({"record": "question_category", "category": c.as_str(), "count": share.count, "percent": share.percent}));
                parts.push(format!("{} {}% ({})", label(c.as_str()), share.percent, share.count));
            }
            if total == 0 {
                lines.push("No tutor questions have been recorded yet.".into());
            } else {
                lines.push(format!("{total} tutor questions: {}.", parts.join(", ")));
            }
        }
    }
    (basis, lines.join(" "))
}

pub struct AnalyticsAgent {
    provider: Arc<dyn ModelProvider>,
}

impl AnalyticsAgent {
    pub fn new(provider: Arc<dyn ModelProvider>) -> Self {
        Self { provider }
    }

    pub async fn answer(&self, question: &str, snap: &AnalyticsSnapshot) -> InstructorAnswer {
        let query = match resolve_intent(question, self.provider.as_ref()).await {
            Resolution::Refused(reason) => {
                return InstructorAnswer {
                    narrative: REFUSAL_TEXT.into(),
                    data_basis: Vec::new(),
                    refusal: Some(reason),
                    query: None,
                    needs_clarification: false,
                };
            }
            Resolution::Clarify => {
                return InstructorAnswer {
                    narrative: clarification_menu(),
                    data_basis: Vec::new(),
                    refusal: None,
                    query: None,
                    needs_clarification: true,
                };
            }
            Resolution::Query(q) => q,
        };

        let (mut basis, fallback) = fetch(query, snap);
        let system = format!(
            "{NARRATOR_ROLE}\nTemplate: {}\nData:\n{}",
            query.template.as_str(),
            serde_json::to_string_pretty(&basis).expect("records serialize")
        );
        let drafted = self
            .provider
            .complete(&ModelRequest::new(system).student(question))
            .await
            .ok()
            .map(|r| r.text.trim().to_owned())
            .filter(|t| !t.is_empty());
        let summary = snap.summary();
        let mut narrative = match drafted {
            Some(t) if uncontained_numbers(&t, &basis).is_empty() && !mentions_alias(&t, summary) => t,
            _ => fallback,
        };

        let zones = &snap.findings().dead_zones;
        if !zones.is_empty() {
            let notice: Vec<String> = zones.iter().map(dead_zone_sentence).collect();
            narrative.push_str(&format!("\nNotice: {}", notice.join(" ")));
            for z in zones {
                let rec = dead_zone_record(z);
                if !basis.contains(&rec) {
                    basis.push(rec);
                }
            }
        }
        InstructorAnswer { narrative, data_basis: basis, refusal: None, query: Some(query), needs_clarification: false }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{FailureMode, MatchRule, ScriptedBehavior, ScriptedProvider};

    #[test]
    fn guard_catches_individual_targeting() {
        for q in [
            "Show me student X's chat transcript",
            "how is alias a1b2 doing",
            "What did this student ask?",
            "Which student struggled most in Module 3?",
            "Give me per-student success rates",
            "tell me about 3f9c2a7b1d0e4c55",
        ] {
            assert!(targets_individual(q), "{q}");
        }
        for q in [
            "How did students engage with Module 2?",
            "What's the overall code success rate?",
            "which parts of the lecture are students skipping",
            "Do students engage more in week 3?",
            "student engagement in module 4",
        ] {
            assert!(!targets_individual(q), "{q}");
        }
    }

    #[test]
    fn containment_check_rejects_injected_numbers() {
        let basis = vec![json!({"total": 387, "successes": 298, "success_rate_pct": 77.0, "note": "Module 3"})];
        assert!(uncontained_numbers("298 of 387 succeeded (77.0%), module 3.", &basis).is_empty());
        assert!(uncontained_numbers("77%", &basis).is_empty());
        assert_eq!(uncontained_numbers("298 of 400 succeeded", &basis), vec!["400"]);
        assert_eq!(uncontained_numbers("77.5% succeeded", &basis), vec!["77.5"]);
    }

    #[test]
    fn menus_and_refusals_carry_no_numbers() {
        assert!(!NUMBER.is_match(&clarification_menu()));
        assert!(!NUMBER.is_match(REFUSAL_TEXT));
    }

    #[tokio::test]
    async fn refusal_happens_before_any_provider_call() {
        let provider = ScriptedProvider::new(vec![]);
        assert_eq!(
            resolve_intent("Show me student X's chat transcript", &provider).await,
            Resolution::Refused(RefusalReason::IndividualData)
        );
        assert!(provider.captured().is_empty());
    }

    #[tokio::test]
    async fn provider_failure_gives_clarification() {
        let provider = ScriptedProvider::new(vec![ScriptedBehavior::new(MatchRule::default()).failing(FailureMode::MalformedOutput)]);
        assert_eq!(resolve_intent("asdf qwer zxcv", &provider).await, Resolution::Clarify);
        let unknown = ScriptedProvider::new(vec![ScriptedBehavior::new(MatchRule::default())
            .structured(json!({"template": "unknown"}))]);
        assert_eq!(resolve_intent("asdf qwer zxcv", &unknown).await, Resolution::Clarify);
    }

    #[tokio::test]
    async fn module_taken_from_question_when_intent_omits_it() {
        let provider = ScriptedProvider::new(vec![ScriptedBehavior::new(MatchRule::default())
            .structured(json!({"template": "engagement_by_module"}))]);
        assert_eq!(
            resolve_intent("How did students engage with Module 2?", &provider).await,
            Resolution::Query(TemplateQuery { template: QueryTemplate::EngagementByModule, module: Some(2) })
        );
    }
}
