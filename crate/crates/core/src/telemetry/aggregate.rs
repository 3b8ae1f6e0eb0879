//! Batch aggregation of stored events into analytics-ready summaries.
//!
//! Video retention: an alias is active in 60-second bin `b` of a module if
//! one of its playback events lands in the bin, or if a playing interval
//! covers it. A play (or a seek while playing) at position `p` starts an
//! interval that ends at the position of the next pause/stop, or after the
//! wall-clock time until the next play/seek has elapsed.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::{
    Curriculum, ErrorCategory, EventPayload, PlaybackAction, QuestionCategory, StudentAlias, TelemetryEvent,
    TimestampMs,
};

pub const RETENTION_BIN_S: u32 = 60;
pub const WEEK_MS: i64 = 7 * 24 * 60 * 60 * 1000;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeStats {
    pub total: u64,
    pub successes: u64,
    #[serde(default)]
    pub errors: BTreeMap<ErrorCategory, u64>,
}

impl CodeStats {
    pub fn record(&mut self, success: bool, category: Option<ErrorCategory>) {
        self.total += 1;
        if success {
            self.successes += 1;
        } else {
            *self.errors.entry(category.unwrap_or(ErrorCategory::Other)).or_default() += 1;
        }
    }

    pub fn merge(&mut self, other: &CodeStats) {
        self.total += other.total;
        self.successes += other.successes;
        for (cat, n) in &other.errors {
            *self.errors.entry(*cat).or_default() += n;
        }
    }

    /// Success percentage rounded to one decimal, `None` when empty.
    pub fn success_rate_pct(&self) -> Option<f64> {
        (self.total > 0).then(|| (1000.0 * self.successes as f64 / self.total as f64).round() / 10.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointStats {
    pub attempts: u64,
    pub passes: u64,
}

/// Checkpoint failures split by what they say about the student.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointFailureStats {
    /// Ran cleanly but failed while missing a required identifier.
    pub comprehension: u64,
    /// Failed at runtime with a quantum-SDK error.
    pub conceptual: u64,
    pub other: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleSummary {
    pub video_length_s: u32,
    /// Distinct active viewers per 60 s bin.
    pub video_retention: Vec<u64>,
    pub video_event_count: u64,
    pub code_stats: CodeStats,
    /// Code stats keyed by week index since the first observed event.
    pub code_by_week: BTreeMap<u32, CodeStats>,
    pub checkpoint_stats: BTreeMap<String, CheckpointStats>,
    pub checkpoint_failures: CheckpointFailureStats,
    pub chat_category_counts: BTreeMap<QuestionCategory, u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasFeatures {
    pub chat_count: u64,
    pub code_exec_count: u64,
    pub video_event_count: u64,
    pub checkpoint_attempts: u64,
    pub chat_categories: BTreeMap<QuestionCategory, u64>,
    /// module -> week index -> event count
    pub activity: BTreeMap<u8, BTreeMap<u32, u64>>,
    /// Events before / at-or-after the midpoint of the observed time span.
    pub first_half_events: u64,
    pub second_half_events: u64,
}

impl AliasFeatures {
    pub fn active_modules(&self) -> BTreeSet<u8> {
        self.activity.iter().filter(|(_, weeks)| weeks.values().any(|&n| n > 0)).map(|(&m, _)| m).collect()
    }

    /// Modules with no activity that lie between two modules with activity.
    pub fn skipped_modules(&self) -> Vec<u8> {
        let active = self.active_modules();
        let (Some(&lo), Some(&hi)) = (active.first(), active.last()) else {
            return Vec::new();
        };
        (lo..=hi).filter(|m| !active.contains(m)).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub per_module: BTreeMap<u8, ModuleSummary>,
    pub per_alias: BTreeMap<StudentAlias, AliasFeatures>,
    pub observed_from: Option<TimestampMs>,
    pub observed_to: Option<TimestampMs>,
    pub total_events: u64,
    pub corrupt_events: u64,
}

impl AggregateSummary {
    pub fn overall_code_stats(&self) -> CodeStats {
        let mut all = CodeStats::default();
        for m in self.per_module.values() {
            all.merge(&m.code_stats);
        }
        all
    }

    pub fn chat_category_counts(&self) -> BTreeMap<QuestionCategory, u64> {
        let mut out = BTreeMap::new();
        for m in self.per_module.values() {
            for (c, n) in &m.chat_category_counts {
                *out.entry(*c).or_default() += n;
            }
        }
        out
    }

    /// Canonical JSON for `summary.json`; identical inputs give identical bytes.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

/// Builds the summary from stored events. Pure: the same events (in any
/// order) and curriculum always give the same summary.
pub fn aggregate(events: &[TelemetryEvent], corrupt_lines: u64, curriculum: &Curriculum) -> AggregateSummary {
    let mut sorted: Vec<&TelemetryEvent> = Vec::with_capacity(events.len());
    let mut ids = BTreeSet::new();
    for e in events {
        if ids.insert(e.event_id.as_str()) {
            sorted.push(e);
        }
    }
    sorted.sort_by(|a, b| (a.at, &a.event_id).cmp(&(b.at, &b.event_id)));

    let mut summary = AggregateSummary {
        corrupt_events: corrupt_lines,
        total_events: sorted.len() as u64,
        observed_from: sorted.first().map(|e| e.at),
        observed_to: sorted.last().map(|e| e.at),
        ..Default::default()
    };
    for m in &curriculum.modules {
        summary.per_module.insert(
            m.id,
            ModuleSummary { video_length_s: m.video_length_s, video_retention: vec![0; m.bin_count()], ..Default::default() },
        );
    }
    let start = summary.observed_from.unwrap_or(0);
    let midpoint = match (summary.observed_from, summary.observed_to) {
        (Some(a), Some(b)) => a + (b - a) / 2,
        _ => 0,
    };
    let week_of = |at: TimestampMs| ((at - start).max(0) / WEEK_MS) as u32;

    // (alias, module) -> playback events in time order
    let mut playback: BTreeMap<(&StudentAlias, u8), Vec<&TelemetryEvent>> = BTreeMap::new();

    for e in &sorted {
        let module = summary.per_module.entry(e.module_id).or_default();
        let features = summary.per_alias.entry(e.alias.clone()).or_default();
        *features.activity.entry(e.module_id).or_default().entry(week_of(e.at)).or_default() += 1;
        if e.at < midpoint {
            features.first_half_events += 1;
        } else {
            features.second_half_events += 1;
        }
        match &e.payload {
            EventPayload::Video(_) => {
                module.video_event_count += 1;
                features.video_event_count += 1;
                playback.entry((&e.alias, e.module_id)).or_default().push(e);
            }
            EventPayload::Code(c) => {
                module.code_stats.record(c.success, c.error_category);
                module.code_by_week.entry(week_of(e.at)).or_default().record(c.success, c.error_category);
                features.code_exec_count += 1;
            }
            EventPayload::Chat(c) => {
                *module.chat_category_counts.entry(c.question_category).or_default() += 1;
                *features.chat_categories.entry(c.question_category).or_default() += 1;
                features.chat_count += 1;
            }
            EventPayload::Checkpoint(c) => {
                let stats = module.checkpoint_stats.entry(c.checkpoint_id.clone()).or_default();
                stats.attempts += 1;
                features.checkpoint_attempts += 1;
                if c.pass {
                    stats.passes += 1;
                } else if c.execution_ok && c.name_mismatch {
                    module.checkpoint_failures.comprehension += 1;
                } else if !c.execution_ok && c.error_category.is_some_and(ErrorCategory::is_sdk_error) {
                    module.checkpoint_failures.conceptual += 1;
                } else {
                    module.checkpoint_failures.other += 1;
                }
            }
            EventPayload::Session(_) => {}
        }
    }

    for ((_, module_id), events) in playback {
        let Some(module) = summary.per_module.get_mut(&module_id) else { continue };
        let len = module.video_length_s;
        if len == 0 {
            continue;
        }
        for bin in active_bins(&events, len) {
            module.video_retention[bin] += 1;
        }
    }
    summary
}

fn active_bins(events: &[&TelemetryEvent], video_length_s: u32) -> BTreeSet<usize> {
    let bin = |pos: u32| (pos.min(video_length_s - 1) / RETENTION_BIN_S) as usize;
    let mut active = BTreeSet::new();
    let mut playing: Option<(u32, TimestampMs)> = None;
    for e in events {
        let EventPayload::Video(v) = &e.payload else { continue };
        if v.position_s < video_length_s {
            active.insert(bin(v.position_s));
        }
        if let Some((from, since)) = playing {
            let to = match v.action {
                PlaybackAction::Pause | PlaybackAction::Stop => v.position_s.max(from),
                PlaybackAction::Play | PlaybackAction::Seek => {
                    let watched = ((e.at - since).max(0) / 1000) as u32;
                    from.saturating_add(watched)
                }
            };
            if from < video_length_s {
                active.extend(bin(from)..=bin(to));
            }
        }
        playing = match v.action {
            PlaybackAction::Play => Some((v.position_s, e.at)),
            PlaybackAction::Seek if playing.is_some() => Some((v.position_s, e.at)),
            PlaybackAction::Seek => None,
            PlaybackAction::Pause | PlaybackAction::Stop => None,
        };
    }
    active
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        CodePayload, LessonModule, StudentAlias, TimestampedConcept, VideoPayload,
    };

    fn curriculum(len: u32) -> Curriculum {
        Curriculum {
            modules: vec![LessonModule {
                id: 1,
                title: "m".into(),
                video_length_s: len,
                concept_map: vec![TimestampedConcept { at_s: 0, concept: "intro".into(), covered_by_checkpoints: vec![] }],
                checkpoints: vec![],
            }],
            error_catalog: vec![],
        }
    }

    fn video(id: &str, alias: &str, at_s: i64, pos: u32, action: PlaybackAction) -> TelemetryEvent {
        TelemetryEvent {
            event_id: id.into(),
            alias: StudentAlias::from_token(alias).unwrap(),
            module_id: 1,
            at: at_s * 1000,
            payload: EventPayload::Video(VideoPayload { position_s: pos, action }),
        }
    }

    #[test]
    fn empty_store_has_zero_bins_of_right_shape() {
        let s = aggregate(&[], 0, &curriculum(3601));
        assert_eq!(s.per_module[&1].video_retention, vec![0; 61]);
        assert_eq!(s.overall_code_stats(), CodeStats::default());
        assert!(s.per_alias.is_empty());
    }

    #[test]
    fn play_then_pause_covers_interval() {
        let ev = vec![
            video("a", "x", 0, 0, PlaybackAction::Play),
            video("b", "x", 200, 200, PlaybackAction::Pause),
            video("c", "y", 0, 100, PlaybackAction::Seek),
        ];
        let s = aggregate(&ev, 0, &curriculum(600));
        assert_eq!(s.per_module[&1].video_retention, vec![1, 2, 1, 1, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn seek_while_playing_uses_elapsed_time() {
        let ev = vec![
            video("a", "x", 0, 0, PlaybackAction::Play),
            video("b", "x", 70, 400, PlaybackAction::Seek),
            video("c", "x", 80, 410, PlaybackAction::Stop),
        ];
        let s = aggregate(&ev, 0, &curriculum(600));
        assert_eq!(s.per_module[&1].video_retention, vec![1, 1, 0, 0, 0, 0, 1, 0, 0, 0]);
    }

    #[test]
    fn order_independent_and_idempotent() {
        let mut ev = vec![
            video("a", "x", 0, 0, PlaybackAction::Play),
            video("b", "x", 200, 200, PlaybackAction::Pause),
            TelemetryEvent {
                event_id: "c".into(),
                alias: StudentAlias::from_token("x").unwrap(),
                module_id: 1,
                at: 5,
                payload: EventPayload::Code(CodePayload { success: false, error_category: Some(ErrorCategory::Syntax) }),
            },
        ];
        let a = aggregate(&ev, 0, &curriculum(600));
        ev.reverse();
        ev.push(ev[0].clone());
        let b = aggregate(&ev, 0, &curriculum(600));
        assert_eq!(a.to_canonical_json(), b.to_canonical_json());
        assert_eq!(a.per_module[&1].code_stats.errors[&ErrorCategory::Syntax], 1);
    }

    #[test]
    fn success_rate_rounding() {
        let s = CodeStats { total: 387, successes: 298, errors: BTreeMap::new() };
        assert_eq!(s.success_rate_pct(), Some(77.0));
        assert_eq!(CodeStats::default().success_rate_pct(), None);
    }

    #[test]
    fn skipped_modules_are_interior_gaps() {
        let mut f = AliasFeatures::default();
        for m in [1u8, 3, 4] {
            f.activity.entry(m).or_default().insert(0, 1);
        }
        assert_eq!(f.skipped_modules(), vec![2]);
    }
}
