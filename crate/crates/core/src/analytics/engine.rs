//! Deterministic detectors over an [`AggregateSummary`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{Curriculum, ErrorCategory, QuestionCategory, StudentAlias};
use crate::telemetry::aggregate::{AggregateSummary, AliasFeatures, RETENTION_BIN_S};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsThresholds {
    pub drop_threshold: f64,
    pub v_min: u64,
    pub c_low: u64,
    pub c_high: u64,
    pub e_high: u64,
    pub alpha: f64,
    pub proximity_window_s: u32,
}

impl Default for AnalyticsThresholds {
    fn default() -> Self {
        Self { drop_threshold: 0.5, v_min: 500, c_low: 5, c_high: 30, e_high: 50, alpha: 0.33, proximity_window_s: 180 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadZone {
    pub module_id: u8,
    pub dropoff_at_s: u32,
    pub uncovered_from_s: u32,
    pub uncovered_concepts: Vec<String>,
    pub severity: f64,
}

/// Retention drop-offs followed by content no checkpoint exercises.
///
/// The drop-off is the first bin after the module's peak whose viewer count
/// falls below `drop_threshold * peak`. Bins before the peak are ignored so
/// that a slow start is not read as a collapse.
pub fn detect_dead_zones(summary: &AggregateSummary, curriculum: &Curriculum, th: &AnalyticsThresholds) -> Vec<DeadZone> {
    let mut out = Vec::new();
    for module in &curriculum.modules {
        let Some(ms) = summary.per_module.get(&module.id) else { continue };
        let bins = &ms.video_retention;
        let Some(peak) = bins.iter().copied().max().filter(|&p| p > 0) else { continue };
        let peak_at = bins.iter().position(|&v| v == peak).expect("peak present");
        let limit = th.drop_threshold * peak as f64;
        let Some(drop_bin) = (peak_at + 1..bins.len()).find(|&b| (bins[b] as f64) < limit) else { continue };
        let dropoff_at_s = drop_bin as u32 * RETENTION_BIN_S;
        let earliest = dropoff_at_s.saturating_sub(th.proximity_window_s);
        let uncovered: Vec<_> = module
            .concept_map
            .iter()
            .filter(|c| c.at_s >= earliest && c.covered_by_checkpoints.is_empty())
            .collect();
        let Some(first) = uncovered.first() else { continue };
        out.push(DeadZone {
            module_id: module.id,
            dropoff_at_s,
            uncovered_from_s: first.at_s,
            uncovered_concepts: uncovered.iter().map(|c| c.concept.clone()).collect(),
            severity: (peak - bins[drop_bin]) as f64 / peak as f64,
        });
    }
    out.sort_by(|a, b| b.severity.total_cmp(&a.severity).then(a.module_id.cmp(&b.module_id)));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    PassiveConsumer,
    LateEngager,
    TutorReliant,
    SelfDirected,
    Unclassified,
}

impl Archetype {
    /// Cascade order; the first matching rule labels the alias.
    pub const RULES: [Archetype; 4] =
        [Archetype::PassiveConsumer, Archetype::LateEngager, Archetype::TutorReliant, Archetype::SelfDirected];

    pub fn as_str(self) -> &'static str {
        match self {
            Archetype::PassiveConsumer => "passive_consumer",
            Archetype::LateEngager => "late_engager",
            Archetype::TutorReliant => "tutor_reliant",
            Archetype::SelfDirected => "self_directed",
            Archetype::Unclassified => "unclassified",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeProfile {
    pub alias: StudentAlias,
    pub label: Archetype,
    pub evidence: BTreeMap<String, f64>,
}

/// Share of an alias's chats that are conceptual or formalism questions.
pub fn conceptual_share(f: &AliasFeatures) -> f64 {
    if f.chat_count == 0 {
        return 0.0;
    }
    let n = [QuestionCategory::ConceptualQuantum, QuestionCategory::MathematicalFormalism]
        .iter()
        .map(|c| f.chat_categories.get(c).copied().unwrap_or(0))
        .sum::<u64>();
    n as f64 / f.chat_count as f64
}

/// Whether one rule of the cascade holds, independent of the others.
pub fn rule_matches(rule: Archetype, f: &AliasFeatures, th: &AnalyticsThresholds) -> bool {
    match rule {
        Archetype::PassiveConsumer => f.video_event_count >= th.v_min && f.code_exec_count == 0 && f.chat_count <= th.c_low,
        Archetype::LateEngager => {
            (f.first_half_events as f64) < th.alpha * f.second_half_events as f64 || !f.skipped_modules().is_empty()
        }
        Archetype::TutorReliant => f.chat_count >= th.c_high && conceptual_share(f) >= 0.5,
        Archetype::SelfDirected => f.code_exec_count >= th.e_high && f.chat_count <= th.c_low,
        Archetype::Unclassified => true,
    }
}

pub fn classify_alias(f: &AliasFeatures, th: &AnalyticsThresholds) -> Archetype {
    Archetype::RULES.into_iter().find(|&r| rule_matches(r, f, th)).unwrap_or(Archetype::Unclassified)
}

fn evidence(f: &AliasFeatures, th: &AnalyticsThresholds) -> BTreeMap<String, f64> {
    [
        ("video_event_count", f.video_event_count as f64),
        ("code_exec_count", f.code_exec_count as f64),
        ("chat_count", f.chat_count as f64),
        ("first_half_events", f.first_half_events as f64),
        ("second_half_events", f.second_half_events as f64),
        ("skipped_module_count", f.skipped_modules().len() as f64),
        ("conceptual_formalism_share", conceptual_share(f)),
        ("v_min", th.v_min as f64),
        ("c_low", th.c_low as f64),
        ("c_high", th.c_high as f64),
        ("e_high", th.e_high as f64),
        ("alpha", th.alpha),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v))
    .collect()
}

pub fn classify_archetypes(summary: &AggregateSummary, th: &AnalyticsThresholds) -> Vec<ArchetypeProfile> {
    summary
        .per_alias
        .iter()
        .map(|(alias, f)| ArchetypeProfile { alias: alias.clone(), label: classify_alias(f, th), evidence: evidence(f, th) })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleFailures {
    pub module_id: u8,
    pub by_category: BTreeMap<ErrorCategory, u64>,
    /// Checkpoint failures that ran cleanly but missed a required name.
    pub comprehension: u64,
    /// Checkpoint failures raised by the quantum SDK at runtime.
    pub conceptual: u64,
}

/// Failure counts per module; modules with no failures are omitted.
pub fn failure_breakdown(summary: &AggregateSummary) -> Vec<ModuleFailures> {
    summary
        .per_module
        .iter()
        .map(|(&module_id, ms)| ModuleFailures {
            module_id,
            by_category: ms.code_stats.errors.iter().filter(|(_, &n)| n > 0).map(|(&c, &n)| (c, n)).collect(),
            comprehension: ms.checkpoint_failures.comprehension,
            conceptual: ms.checkpoint_failures.conceptual,
        })
        .filter(|f| !f.by_category.is_empty() || f.comprehension > 0 || f.conceptual > 0)
        .collect()
}

/// The `findings.json` document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Findings {
    pub thresholds: AnalyticsThresholds,
    pub dead_zones: Vec<DeadZone>,
    pub archetypes: Vec<ArchetypeProfile>,
    pub failure_breakdown: Vec<ModuleFailures>,
}

impl Findings {
    pub fn compute(summary: &AggregateSummary, curriculum: &Curriculum, thresholds: AnalyticsThresholds) -> Self {
        Self {
            thresholds,
            dead_zones: detect_dead_zones(summary, curriculum, &thresholds),
            archetypes: classify_archetypes(summary, &thresholds),
            failure_breakdown: failure_breakdown(summary),
        }
    }

    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("findings serialize")
    }

    pub fn archetype_counts(&self) -> BTreeMap<Archetype, u64> {
        let mut out = BTreeMap::new();
        for p in &self.archetypes {
            *out.entry(p.label).or_default() += 1;
        }
        out
    }
}
