//! Replays an event log through `POST /events`, aggregates what the service
//! stored and checks the result against an expectations file.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tutor_core::analytics::{AnalyticsThresholds, Findings};
use tutor_core::model::{distribution_from_counts, CategoryShare, StudentAlias};
use tutor_core::orchestrator::OrchestratorConfig;
use tutor_core::provider::ScriptedProvider;
use tutor_core::telemetry::aggregate::{AggregateSummary, CodeStats};
use tutor_core::telemetry::store::{EventStore, MemoryStore, StoreSnapshot};

use crate::{read, HarnessError, LocalService, TestModeFiles, HARNESS_INSTRUCTOR_TOKEN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub total: u64,
    pub successes: u64,
    pub pct: Option<f64>,
}

impl From<&CodeStats> for Rate {
    fn from(s: &CodeStats) -> Self {
        Self { total: s.total, successes: s.successes, pct: s.success_rate_pct() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleReport {
    pub code: Rate,
    /// Keyed by week of the term, counted from the first event.
    pub code_by_week: BTreeMap<u32, Rate>,
    pub checkpoint_failures_comprehension: u64,
    pub checkpoint_failures_conceptual: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadZoneReport {
    pub module_id: u8,
    pub dropoff_minute: u32,
    pub uncovered_from_minute: u32,
    pub severity: f64,
    pub uncovered_concepts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructorExchange {
    pub question: String,
    pub status: u16,
    pub answer: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub log_lines: u64,
    pub corrupt_lines: u64,
    pub accepted: u64,
    pub duplicates: u64,
    pub rejected: u64,
    pub stored_events: u64,
    pub overall_code: Rate,
    pub modules: BTreeMap<u8, ModuleReport>,
    pub question_categories: BTreeMap<String, CategoryShare>,
    pub dead_zones: Vec<DeadZoneReport>,
    pub archetype_counts: BTreeMap<String, u64>,
    pub archetypes: BTreeMap<StudentAlias, String>,
    pub summary_sha256: String,
    pub findings_sha256: String,
    pub instructor: Vec<InstructorExchange>,
    pub assertions: Vec<Assertion>,
}

impl ReplayReport {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }
}

/// Aggregates expected from a replayed log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    pub code_total: u64,
    pub code_successes: u64,
    pub overall_success_pct: f64,
    pub overall_tolerance_pct: f64,
    /// Modules whose success rate must fall inside `module_band_pct`.
    pub banded_modules: Vec<u8>,
    pub module_band_pct: [f64; 2],
    pub dependency_fix: DependencyFix,
    /// Whole-number share per question category.
    pub question_percent: BTreeMap<String, u64>,
    pub dead_zones: Vec<ExpectedDeadZone>,
    pub archetypes: BTreeMap<StudentAlias, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DependencyFix {
    pub module_id: u8,
    pub before_week: u32,
    pub before_pct: f64,
    pub before_tolerance_pct: f64,
    pub after_week: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedDeadZone {
    pub module_id: u8,
    pub dropoff_minute: u32,
    pub uncovered_from_minute: u32,
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Builds the report body from aggregates. Assertions are added separately.
pub fn report_from(summary: &AggregateSummary, findings: &Findings) -> ReplayReport {
    let modules = summary
        .per_module
        .iter()
        .map(|(&id, m)| {
            (
                id,
                ModuleReport {
                    code: Rate::from(&m.code_stats),
                    code_by_week: m.code_by_week.iter().map(|(&w, s)| (w, Rate::from(s))).collect(),
                    checkpoint_failures_comprehension: m.checkpoint_failures.comprehension,
                    checkpoint_failures_conceptual: m.checkpoint_failures.conceptual,
                },
            )
        })
        .collect();
    let question_categories = distribution_from_counts(&summary.chat_category_counts())
        .into_iter()
        .map(|(c, share)| (c.as_str().to_owned(), share))
        .collect();
    let dead_zones = findings
        .dead_zones
        .iter()
        .map(|z| DeadZoneReport {
            module_id: z.module_id,
            dropoff_minute: z.dropoff_at_s / 60,
            uncovered_from_minute: z.uncovered_from_s / 60,
            severity: z.severity,
            uncovered_concepts: z.uncovered_concepts.clone(),
        })
        .collect();
    ReplayReport {
        log_lines: 0,
        corrupt_lines: summary.corrupt_events,
        accepted: 0,
        duplicates: 0,
        rejected: 0,
        stored_events: summary.total_events,
        overall_code: Rate::from(&summary.overall_code_stats()),
        modules,
        question_categories,
        dead_zones,
        archetype_counts: findings.archetype_counts().into_iter().map(|(a, n)| (a.as_str().to_owned(), n)).collect(),
        archetypes: findings.archetypes.iter().map(|p| (p.alias.clone(), p.label.as_str().to_owned())).collect(),
        summary_sha256: sha256_hex(&summary.to_canonical_json()),
        findings_sha256: sha256_hex(&findings.to_canonical_json()),
        instructor: Vec::new(),
        assertions: Vec::new(),
    }
}

fn check(out: &mut Vec<Assertion>, name: &str, pass: bool, detail: String) {
    out.push(Assertion { name: name.to_owned(), pass, detail });
}

fn pct(r: Option<&Rate>) -> Option<f64> {
    r.and_then(|r| r.pct)
}

/// Evaluates the report against expected aggregates.
pub fn evaluate(report: &ReplayReport, exp: &Expectations) -> Vec<Assertion> {
    let mut out = Vec::new();
    let o = &report.overall_code;
    check(
        &mut out,
        "code_counts",
        o.total == exp.code_total && o.successes == exp.code_successes,
        format!("{}/{} successes, expected {}/{}", o.successes, o.total, exp.code_successes, exp.code_total),
    );
    check(
        &mut out,
        "overall_success_rate",
        o.pct.is_some_and(|p| (p - exp.overall_success_pct).abs() <= exp.overall_tolerance_pct),
        format!("{:?}%, expected {} ± {}", o.pct, exp.overall_success_pct, exp.overall_tolerance_pct),
    );
    let [lo, hi] = exp.module_band_pct;
    for &m in &exp.banded_modules {
        let p = pct(report.modules.get(&m).map(|r| &r.code));
        check(
            &mut out,
            &format!("module_{m}_success_band"),
            p.is_some_and(|p| (lo..=hi).contains(&p)),
            format!("{p:?}%, expected within [{lo}, {hi}]"),
        );
    }
    let fix = &exp.dependency_fix;
    let weeks = report.modules.get(&fix.module_id).map(|r| &r.code_by_week);
    let before = pct(weeks.and_then(|w| w.get(&fix.before_week)));
    let after = pct(weeks.and_then(|w| w.get(&fix.after_week)));
    check(
        &mut out,
        "dependency_fix_before",
        before.is_some_and(|p| (p - fix.before_pct).abs() <= fix.before_tolerance_pct),
        format!("module {} week {}: {before:?}%, expected {} ± {}", fix.module_id, fix.before_week, fix.before_pct, fix.before_tolerance_pct),
    );
    check(
        &mut out,
        "dependency_fix_recovery",
        after.is_some_and(|p| (lo..=hi).contains(&p)),
        format!("module {} week {}: {after:?}%, expected within [{lo}, {hi}]", fix.module_id, fix.after_week),
    );
    let got: BTreeMap<&str, u64> = report.question_categories.iter().map(|(k, s)| (k.as_str(), s.percent)).collect();
    let want: BTreeMap<&str, u64> = exp.question_percent.iter().map(|(k, &v)| (k.as_str(), v)).collect();
    check(&mut out, "question_category_percent", got == want, format!("{got:?}, expected {want:?}"));
    let zones: Vec<(u8, u32, u32)> =
        report.dead_zones.iter().map(|z| (z.module_id, z.dropoff_minute, z.uncovered_from_minute)).collect();
    let want_zones: Vec<(u8, u32, u32)> =
        exp.dead_zones.iter().map(|z| (z.module_id, z.dropoff_minute, z.uncovered_from_minute)).collect();
    check(&mut out, "dead_zones", zones == want_zones, format!("{zones:?}, expected {want_zones:?}"));
    for (alias, label) in &exp.archetypes {
        let got = report.archetypes.get(alias);
        check(
            &mut out,
            &format!("archetype_{label}"),
            got == Some(label),
            format!("intended student labelled {}", got.map_or("<absent>", String::as_str)),
        );
    }
    out
}

pub struct ReplayOptions {
    pub files: TestModeFiles,
    pub questions: Vec<String>,
    /// Post every event this many times; the store must absorb the repeats.
    pub passes: u32,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        Self { files: TestModeFiles::default(), questions: Vec::new(), passes: 1 }
    }
}

/// Outcome of one replay, with the raw artifacts kept for byte comparison.
pub struct ReplayRun {
    pub report: ReplayReport,
    pub summary_json: String,
    pub findings_json: String,
}

/// Posts every parseable line of `log` to a fresh in-process service, then
/// aggregates the store and evaluates `expect` if given.
pub async fn replay(
    log: &str,
    provider: Arc<ScriptedProvider>,
    expect: Option<&Expectations>,
    options: &ReplayOptions,
) -> Result<ReplayRun, HarnessError> {
    let store = Arc::new(MemoryStore::new());
    let service = LocalService::start(
        &options.files,
        provider,
        Arc::clone(&store) as Arc<dyn EventStore>,
        OrchestratorConfig::default(),
    )
    .await?;
    let client = reqwest::Client::new();
    let parsed = StoreSnapshot::from_jsonl(log);
    let log_lines = log.lines().filter(|l| !l.trim().is_empty()).count() as u64;

    let (mut accepted, mut duplicates, mut rejected) = (0, 0, 0);
    for _ in 0..options.passes.max(1) {
        for event in &parsed.events {
            let resp = client.post(service.url("/events")).json(event).send().await?;
            let status = resp.status().as_u16();
            let body: serde_json::Value = resp.json().await.unwrap_or_default();
            match (status, body["status"].as_str()) {
                (202, Some("accepted")) => accepted += 1,
                (202, Some("duplicate")) => duplicates += 1,
                _ => rejected += 1,
            }
        }
    }
    if !service.state.flush_events(Duration::from_secs(10)).await {
        return Err(HarnessError::Service("event queue did not drain".into()));
    }

    let (summary, findings) =
        service.state.aggregate_store().await.map_err(|e| HarnessError::Service(e.message.clone()))?;
    let mut summary = summary;
    // lines that never reached the service still count as corrupt input
    summary.corrupt_events += parsed.corrupt_lines;

    let mut report = report_from(&summary, &findings);
    report.log_lines = log_lines;
    report.accepted = accepted;
    report.duplicates = duplicates;
    report.rejected = rejected;

    for question in &options.questions {
        let resp = client
            .post(service.url("/instructor/query"))
            .bearer_auth(HARNESS_INSTRUCTOR_TOKEN)
            .json(&serde_json::json!({ "question": question }))
            .send()
            .await?;
        let status = resp.status().as_u16();
        let answer = resp.json().await.unwrap_or_default();
        report.instructor.push(InstructorExchange { question: question.clone(), status, answer });
    }

    if let Some(exp) = expect {
        report.assertions = evaluate(&report, exp);
    }
    Ok(ReplayRun { summary_json: summary.to_canonical_json(), findings_json: findings.to_canonical_json(), report })
}

/// File-based entry point used by the CLI.
pub async fn replay_files(
    log: &Path,
    script: &Path,
    expect: Option<&Path>,
    options: &ReplayOptions,
) -> Result<ReplayRun, HarnessError> {
    let text = read(log)?;
    let provider = Arc::new(
        ScriptedProvider::load_script(script)
            .map_err(|e| HarnessError::Read { path: script.display().to_string(), reason: e.to_string() })?,
    );
    let expectations = match expect {
        Some(p) => Some(
            serde_json::from_str::<Expectations>(&read(p)?)
                .map_err(|e| HarnessError::Read { path: p.display().to_string(), reason: e.to_string() })?,
        ),
        None => None,
    };
    replay(&text, provider, expectations.as_ref(), options).await
}

/// Aggregates a log directly, without the service, for comparison.
pub fn aggregate_log(log: &str, curriculum: &tutor_core::model::Curriculum) -> (AggregateSummary, Findings) {
    let snap = StoreSnapshot::from_jsonl(log);
    let summary = tutor_core::telemetry::aggregate::aggregate(&snap.events, snap.corrupt_lines, curriculum);
    let findings = Findings::compute(&summary, curriculum, AnalyticsThresholds::default());
    (summary, findings)
}
