//! Synthetic pilot event log.
//!
//! Five students over a ten-week term, two weeks per module. The counts are
//! authored so the aggregate figures match the reported pilot: 298 of 387
//! code executions succeed, the chat mix is 17/15/13/9/10/6/5 over 75
//! questions, module 2 viewing collapses at minute 42, and four of the
//! students each fit one behavioral archetype. The log is generated, not
//! recorded, and the committed `fixtures/pilot_events.jsonl` must match
//! [`generate`] byte for byte.

use tutor_core::model::{
    ChatPayload, CheckpointPayload, CodePayload, ErrorCategory, EventPayload, PlaybackAction, QuestionCategory,
    SessionAction, SessionPayload, StudentAlias, TelemetryEvent, TimestampMs, VideoPayload,
};
use tutor_core::telemetry::alias::make_alias;
use tutor_core::telemetry::aggregate::WEEK_MS;

/// Monday 2025-08-25 09:00 UTC.
pub const TERM_START_MS: TimestampMs = 1_756_112_400_000;
pub const FIXTURE_KEY: &str = "pilot-fixture-key";
const DAY_MS: TimestampMs = 24 * 60 * 60 * 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PilotStudent {
    SelfDirected,
    TutorReliant,
    LateEngager,
    PassiveConsumer,
    Unclassified,
}

impl PilotStudent {
    pub const ALL: [PilotStudent; 5] = [
        PilotStudent::SelfDirected,
        PilotStudent::TutorReliant,
        PilotStudent::LateEngager,
        PilotStudent::PassiveConsumer,
        PilotStudent::Unclassified,
    ];

    pub fn raw_ref(self) -> &'static str {
        match self {
            PilotStudent::SelfDirected => "pilot-student-1",
            PilotStudent::TutorReliant => "pilot-student-2",
            PilotStudent::LateEngager => "pilot-student-3",
            PilotStudent::PassiveConsumer => "pilot-student-4",
            PilotStudent::Unclassified => "pilot-student-5",
        }
    }

    pub fn alias(self) -> StudentAlias {
        make_alias(self.raw_ref(), FIXTURE_KEY).expect("fixture key is set")
    }

    fn index(self) -> usize {
        Self::ALL.iter().position(|&s| s == self).expect("listed")
    }
}

use PilotStudent::*;

/// Code executions in one week of the term, per student in `ALL` order.
struct CodeSlice {
    module: u8,
    week: u32,
    per_student: [u32; 5],
    failures: &'static [(ErrorCategory, u32)],
}

use ErrorCategory::*;

const CODE: [CodeSlice; 10] = [
    CodeSlice { module: 1, week: 0, per_student: [15, 10, 5, 0, 20], failures: &[(Syntax, 3), (Mathematical, 2), (ApiMisuse, 1)] },
    CodeSlice { module: 1, week: 1, per_student: [15, 10, 5, 0, 20], failures: &[(Syntax, 2), (Mathematical, 2), (ApiMisuse, 2), (Other, 1)] },
    CodeSlice { module: 2, week: 2, per_student: [18, 10, 0, 0, 17], failures: &[(Mathematical, 3), (ApiMisuse, 2), (Syntax, 1)] },
    CodeSlice { module: 2, week: 3, per_student: [17, 10, 0, 0, 18], failures: &[(Mathematical, 2), (ApiMisuse, 2), (Syntax, 2)] },
    // before the sandbox image gained pylatexenc
    CodeSlice { module: 3, week: 4, per_student: [15, 10, 15, 0, 10], failures: &[(MissingDependency, 16), (ApiMisuse, 4)] },
    CodeSlice { module: 3, week: 5, per_student: [15, 5, 15, 0, 10], failures: &[(ApiMisuse, 3), (Mathematical, 2), (Syntax, 1)] },
    CodeSlice { module: 4, week: 6, per_student: [10, 5, 8, 0, 5], failures: &[(ApiMisuse, 4), (DeprecatedApi, 3), (Mathematical, 2), (Syntax, 1)] },
    CodeSlice { module: 4, week: 7, per_student: [10, 5, 7, 0, 5], failures: &[(ApiMisuse, 4), (DeprecatedApi, 2), (Mathematical, 2), (Syntax, 2)] },
    CodeSlice { module: 5, week: 8, per_student: [8, 3, 10, 0, 4], failures: &[(ApiMisuse, 4), (Mathematical, 3), (DeprecatedApi, 2), (Syntax, 1)] },
    CodeSlice { module: 5, week: 9, per_student: [7, 2, 10, 0, 3], failures: &[(ApiMisuse, 3), (Mathematical, 3), (DeprecatedApi, 1), (Syntax, 1)] },
];

use QuestionCategory::*;

/// Chat questions per student as (module, category, count).
fn chats(student: PilotStudent) -> Vec<(u8, QuestionCategory, u32)> {
    match student {
        SelfDirected => vec![(1, Implementation, 1), (2, Implementation, 1), (3, Implementation, 1), (4, Implementation, 1)],
        TutorReliant => vec![
            (1, ConceptualQuantum, 3),
            (1, MathematicalFormalism, 3),
            (2, ConceptualQuantum, 3),
            (2, MathematicalFormalism, 2),
            (2, StudyStrategies, 1),
            (3, ConceptualQuantum, 2),
            (3, MathematicalFormalism, 2),
            (3, CrossLessonSynthesis, 2),
            (3, StudyStrategies, 1),
            (4, ConceptualQuantum, 2),
            (4, MathematicalFormalism, 2),
            (4, CrossLessonSynthesis, 2),
            (4, StudyStrategies, 2),
            (5, ConceptualQuantum, 2),
            (5, MathematicalFormalism, 1),
            (5, CrossLessonSynthesis, 1),
            (5, StudyStrategies, 1),
        ],
        LateEngager => vec![
            (1, SocialExploratory, 4),
            (3, StudyStrategies, 2),
            (3, Implementation, 1),
            (3, VideoReference, 1),
            (4, StudyStrategies, 1),
            (4, Implementation, 1),
            (4, VideoReference, 1),
            (5, StudyStrategies, 1),
            (5, Implementation, 1),
            (5, VideoReference, 1),
        ],
        PassiveConsumer => vec![(1, SocialExploratory, 1), (4, SocialExploratory, 1)],
        Unclassified => vec![
            (1, StudyStrategies, 2),
            (1, SocialExploratory, 1),
            (1, VideoReference, 1),
            (2, StudyStrategies, 2),
            (2, ConceptualQuantum, 1),
            (2, MathematicalFormalism, 1),
            (3, StudyStrategies, 2),
            (3, SocialExploratory, 1),
            (3, Implementation, 1),
            (3, VideoReference, 1),
            (4, StudyStrategies, 1),
            (4, ConceptualQuantum, 1),
            (4, MathematicalFormalism, 1),
            (4, SocialExploratory, 1),
            (4, VideoReference, 1),
            (5, StudyStrategies, 1),
            (5, ConceptualQuantum, 1),
            (5, MathematicalFormalism, 1),
            (5, SocialExploratory, 1),
            (5, Implementation, 1),
        ],
    }
}

const VIDEO_LENGTH_S: [u32; 5] = [3000, 3300, 3000, 3300, 2700];
const PASSIVE_SEGMENTS: u32 = 110;
/// Where most module 2 viewers leave the lecture.
pub const MODULE2_EXIT_S: u32 = 2500;

const CHECKPOINTS: [(u8, &[&str]); 5] = [
    (1, &["m1-c1", "m1-c2", "m1-c3", "m1-c4"]),
    (2, &["m2-c1", "m2-c2", "m2-c3", "m2-c4"]),
    (3, &["m3-c1", "m3-c2", "m3-c3", "m3-c4"]),
    (4, &["m4-c1", "m4-c2", "m4-c3"]),
    (5, &["m5-c1", "m5-c2"]),
];

fn weeks_of(module: u8) -> [u32; 2] {
    let first = 2 * (module as u32 - 1);
    [first, first + 1]
}

/// One student's activity in one week, before timestamps are assigned.
#[derive(Default)]
struct Block {
    items: Vec<(u8, Item)>,
}

enum Item {
    Payload(EventPayload),
    /// A play/pause pair covering `from..to` of the lecture.
    Watch { from: u32, to: u32 },
}

impl Block {
    fn push(&mut self, module: u8, payload: EventPayload) {
        self.items.push((module, Item::Payload(payload)));
    }
}

fn code(success: bool, category: Option<ErrorCategory>) -> EventPayload {
    EventPayload::Code(CodePayload { success, error_category: category })
}

fn passed(checkpoint_id: &str) -> EventPayload {
    EventPayload::Checkpoint(CheckpointPayload {
        checkpoint_id: checkpoint_id.to_owned(),
        pass: true,
        output_ok: true,
        approach_ok: true,
        execution_ok: true,
        error_category: None,
        name_mismatch: false,
    })
}

/// Outcomes for a slice, spread so failures do not cluster on one student.
fn slice_outcomes(slice: &CodeSlice) -> Vec<Option<ErrorCategory>> {
    let total: u32 = slice.per_student.iter().sum();
    let mut ordered: Vec<Option<ErrorCategory>> =
        slice.failures.iter().flat_map(|&(c, n)| std::iter::repeat_n(Some(c), n as usize)).collect();
    ordered.resize(total as usize, None);
    let n = ordered.len();
    let stride = (1..n).rev().find(|k| gcd(*k, n) == 1 && *k <= n / 3 + 1).unwrap_or(1);
    (0..n).map(|i| ordered[(i * stride) % n]).collect()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn blocks() -> Vec<[Block; 5]> {
    let mut weeks: Vec<[Block; 5]> = (0..10).map(|_| Default::default()).collect();

    for slice in &CODE {
        let outcomes = slice_outcomes(slice);
        let mut next = 0;
        for student in PilotStudent::ALL {
            let n = slice.per_student[student.index()] as usize;
            for outcome in &outcomes[next..next + n] {
                weeks[slice.week as usize][student.index()].push(slice.module, code(outcome.is_none(), *outcome));
            }
            next += n;
        }
    }

    for student in PilotStudent::ALL {
        let mut per_module: [Vec<QuestionCategory>; 5] = Default::default();
        for (module, category, n) in chats(student) {
            per_module[module as usize - 1].extend(std::iter::repeat_n(category, n as usize));
        }
        for (i, list) in per_module.into_iter().enumerate() {
            let module = i as u8 + 1;
            let split = list.len().div_ceil(2);
            for (j, c) in list.into_iter().enumerate() {
                let week = weeks_of(module)[usize::from(j >= split)];
                weeks[week as usize][student.index()]
                    .push(module, EventPayload::Chat(ChatPayload { question_category: c }));
            }
        }
    }

    for (module, ids) in CHECKPOINTS {
        let week = weeks_of(module)[1] as usize;
        for student in [SelfDirected, TutorReliant, LateEngager, Unclassified] {
            if student == LateEngager && module == 2 {
                continue;
            }
            for &id in ids {
                let block = &mut weeks[week][student.index()];
                match (student, id) {
                    (TutorReliant, "m1-c3") => block.push(
                        module,
                        EventPayload::Checkpoint(CheckpointPayload {
                            checkpoint_id: id.into(),
                            pass: false,
                            output_ok: false,
                            approach_ok: false,
                            execution_ok: false,
                            error_category: Some(ApiMisuse),
                            name_mismatch: false,
                        }),
                    ),
                    (Unclassified, "m3-c1") => block.push(
                        module,
                        EventPayload::Checkpoint(CheckpointPayload {
                            checkpoint_id: id.into(),
                            pass: false,
                            output_ok: false,
                            approach_ok: true,
                            execution_ok: true,
                            error_category: None,
                            name_mismatch: true,
                        }),
                    ),
                    _ => {}
                }
                block.push(module, passed(id));
            }
        }
    }

    // Lecture viewing. The passive student watches every lecture in short
    // segments; three of the four module 2 viewers leave at the same point.
    for module in 1..=5u8 {
        let len = VIDEO_LENGTH_S[module as usize - 1];
        let end = if module == 2 { MODULE2_EXIT_S } else { len };
        let [w0, w1] = weeks_of(module);
        for k in 0..PASSIVE_SEGMENTS {
            let from = end * k / PASSIVE_SEGMENTS;
            let to = end * (k + 1) / PASSIVE_SEGMENTS;
            let week = if k < PASSIVE_SEGMENTS / 2 { w0 } else { w1 };
            weeks[week as usize][PassiveConsumer.index()].items.push((module, Item::Watch { from, to }));
        }
    }
    let [w0, _] = weeks_of(2);
    for (student, to) in [(SelfDirected, MODULE2_EXIT_S), (Unclassified, MODULE2_EXIT_S), (TutorReliant, VIDEO_LENGTH_S[1])] {
        weeks[w0 as usize][student.index()].items.insert(0, (2, Item::Watch { from: 0, to }));
    }
    weeks
}

/// Builds the pilot log in timestamp order.
pub fn generate() -> Vec<TelemetryEvent> {
    let mut out = Vec::new();
    let mut seq = 0u32;
    let mut emit = |alias: &StudentAlias, module: u8, at: TimestampMs, payload: EventPayload| {
        seq += 1;
        out.push(TelemetryEvent { event_id: format!("pilot-{seq:05}"), alias: alias.clone(), module_id: module, at, payload });
    };
    for (week, students) in blocks().into_iter().enumerate() {
        for student in PilotStudent::ALL {
            let block = &students[student.index()];
            if block.items.is_empty() {
                continue;
            }
            let alias = student.alias();
            let module = block.items[0].0;
            // each student works on their own weekday, the passive student
            // spreads viewing over two days
            let mut at = TERM_START_MS + week as TimestampMs * WEEK_MS + student.index() as TimestampMs * DAY_MS / 2;
            emit(&alias, module, at, EventPayload::Session(SessionPayload { action: SessionAction::Start }));
            for (module, item) in &block.items {
                at += 45_000;
                match item {
                    Item::Payload(p) => emit(&alias, *module, at, p.clone()),
                    Item::Watch { from, to } => {
                        let video = |position_s, action| EventPayload::Video(VideoPayload { position_s, action });
                        emit(&alias, *module, at, video(*from, PlaybackAction::Play));
                        at += (to - from) as TimestampMs * 1000;
                        emit(&alias, *module, at, video(*to, PlaybackAction::Pause));
                    }
                }
            }
            at += 45_000;
            emit(&alias, module, at, EventPayload::Session(SessionPayload { action: SessionAction::End }));
        }
    }
    out.sort_by(|a, b| (a.at, &a.event_id).cmp(&(b.at, &b.event_id)));
    out
}

pub fn to_jsonl(events: &[TelemetryEvent]) -> String {
    events.iter().map(|e| e.to_json_line() + "\n").collect()
}
