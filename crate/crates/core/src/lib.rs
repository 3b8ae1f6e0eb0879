//! Core of the classroom tutoring platform: curriculum model, model
//! providers, the parallel teaching orchestrator, the dual-criteria grader,
//! the telemetry pipeline and the analytics built on top of it.

pub mod analytics;
pub mod grader;
pub mod model;
pub mod orchestrator;
pub mod provider;
pub mod sandbox;
pub mod sessions;
pub mod telemetry;
