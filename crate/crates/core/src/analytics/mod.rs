//! Learning analytics: deterministic detectors and the instructor agent
//! that narrates their results.

pub mod agent;
pub mod engine;

pub use agent::{
    resolve_intent, targets_individual, uncontained_numbers, AnalyticsAgent, AnalyticsSnapshot, InstructorAnswer,
    QueryTemplate, RefusalReason, Resolution, TemplateQuery,
};
pub use engine::{
    classify_alias, classify_archetypes, detect_dead_zones, failure_breakdown, rule_matches, AnalyticsThresholds,
    Archetype, ArchetypeProfile, DeadZone, Findings, ModuleFailures,
};
