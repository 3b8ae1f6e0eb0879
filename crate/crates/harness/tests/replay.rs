use std::sync::Arc;

use tutor_core::analytics::{rule_matches, Archetype, AnalyticsThresholds};
use tutor_core::provider::ScriptedProvider;
use tutor_harness::load::{run_load, Delays, LoadProfile};
use tutor_harness::pilot::{self, PilotStudent};
use tutor_harness::replay::{aggregate_log, replay, replay_files, Expectations, ReplayOptions};
use tutor_harness::{fixtures_dir, TestModeFiles};

fn pilot_script() -> Arc<ScriptedProvider> {
    Arc::new(ScriptedProvider::load_script(fixtures_dir().join("scripts/pilot.json")).unwrap())
}

#[test]
fn committed_pilot_log_matches_the_generator() {
    let committed = std::fs::read_to_string(fixtures_dir().join("pilot_events.jsonl")).unwrap();
    assert!(committed == pilot::to_jsonl(&pilot::generate()), "regenerate with `harness gen-pilot`");
}

#[test]
fn each_pilot_student_fits_exactly_one_rule() {
    let curriculum = tutor_service::load_curriculum(&fixtures_dir().join("curriculum.json")).unwrap();
    let (summary, _) = aggregate_log(&pilot::to_jsonl(&pilot::generate()), &curriculum);
    let th = AnalyticsThresholds::default();
    let rules = [Archetype::PassiveConsumer, Archetype::LateEngager, Archetype::TutorReliant, Archetype::SelfDirected];
    for student in PilotStudent::ALL {
        let f = &summary.per_alias[&student.alias()];
        let matched: Vec<_> = rules.iter().filter(|&&r| rule_matches(r, f, &th)).collect();
        match student {
            PilotStudent::Unclassified => assert!(matched.is_empty(), "{student:?} matched {matched:?}"),
            _ => assert_eq!(matched.len(), 1, "{student:?} matched {matched:?}"),
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn pilot_replay_meets_expectations() {
    let dir = fixtures_dir();
    let run = replay_files(
        &dir.join("pilot_events.jsonl"),
        &dir.join("scripts/pilot.json"),
        Some(&dir.join("pilot_expectations.json")),
        &ReplayOptions::default(),
    )
    .await
    .unwrap();
    let failed: Vec<_> = run.report.assertions.iter().filter(|a| !a.pass).collect();
    assert!(failed.is_empty(), "{failed:#?}");
    assert_eq!(run.report.assertions.len(), 12);
    assert_eq!(run.report.rejected, 0);
}

#[tokio::test(flavor = "multi_thread")]
async fn replay_through_the_service_equals_direct_aggregation() {
    let log = std::fs::read_to_string(fixtures_dir().join("pilot_events.jsonl")).unwrap();
    let run = replay(&log, pilot_script(), None, &ReplayOptions::default()).await.unwrap();
    let curriculum = tutor_service::load_curriculum(&fixtures_dir().join("curriculum.json")).unwrap();
    let (summary, findings) = aggregate_log(&log, &curriculum);
    assert!(run.summary_json == summary.to_canonical_json());
    assert!(run.findings_json == findings.to_canonical_json());
}

#[tokio::test(flavor = "multi_thread")]
async fn empty_log_gives_an_all_zero_report() {
    let run = replay("", pilot_script(), None, &ReplayOptions::default()).await.unwrap();
    let r = &run.report;
    assert_eq!((r.log_lines, r.accepted, r.stored_events), (0, 0, 0));
    assert_eq!(r.overall_code.total, 0);
    assert_eq!(r.overall_code.pct, None);
    assert!(r.dead_zones.is_empty());
    assert!(r.archetypes.is_empty());
    assert!(r.passed());
}

#[tokio::test(flavor = "multi_thread")]
async fn corrupt_lines_are_counted_not_fatal() {
    let mut log = pilot::to_jsonl(&pilot::generate()[..50]);
    log.push_str("{not json\n");
    let run = replay(&log, pilot_script(), None, &ReplayOptions::default()).await.unwrap();
    assert_eq!(run.report.corrupt_lines, 1);
    assert_eq!(run.report.accepted, 50);
}

#[tokio::test(flavor = "multi_thread")]
async fn expectations_catch_a_wrong_log() {
    let exp: Expectations =
        serde_json::from_str(&std::fs::read_to_string(fixtures_dir().join("pilot_expectations.json")).unwrap()).unwrap();
    // drop the module 2 viewing: no dead zone, so the replay must fail
    let events: Vec<_> = pilot::generate()
        .into_iter()
        .filter(|e| !(e.module_id == 2 && e.category() == tutor_core::model::EventCategory::VideoPlayback))
        .collect();
    let run = replay(&pilot::to_jsonl(&events), pilot_script(), Some(&exp), &ReplayOptions::default()).await.unwrap();
    assert!(!run.report.passed());
    assert!(run.report.assertions.iter().any(|a| a.name == "dead_zones" && !a.pass));
}

#[tokio::test(flavor = "multi_thread")]
async fn zero_delay_chat_is_fast() {
    let profile = LoadProfile { users: 1, queries_per_user: 10, delays: Delays::parse("0,0,0,0").unwrap(), failing_sink: false };
    let report = run_load(&profile, &TestModeFiles::default()).await.unwrap();
    assert_eq!(report.errors, 0);
    assert!(report.p50_ms < 100.0, "p50 {} ms", report.p50_ms);
    assert_eq!(report.phases["synth"].calls, 10);
}
