//! Concurrent `/chat` load with fixed specialist delays.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Barrier;
use tutor_core::orchestrator::OrchestratorConfig;
use tutor_core::provider::{
    MatchRule, ModelProvider, ModelRequest, ModelResponse, ProviderError, SchemaTag, ScriptedBehavior, ScriptedProvider,
};
use tutor_core::telemetry::store::{EventStore, FaultyStore, MemoryStore};

use crate::{percentile, HarnessError, LocalService, TestModeFiles};

/// Per-phase provider delays in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delays {
    pub video: u64,
    pub guidance: u64,
    pub code: u64,
    pub synth: u64,
}

impl Delays {
    /// Parses `video,guidance,code,synth`.
    pub fn parse(text: &str) -> Result<Self, String> {
        let parts: Vec<u64> = text
            .split(',')
            .map(|p| p.trim().parse::<u64>().map_err(|_| format!("not a delay in ms: {p:?}")))
            .collect::<Result<_, _>>()?;
        match parts[..] {
            [video, guidance, code, synth] => Ok(Self { video, guidance, code, synth }),
            _ => Err(format!("expected four delays (video,guidance,code,synth), got {}", parts.len())),
        }
    }

    /// Specialists run in parallel, so the synthesizer waits for the slowest.
    pub fn predicted_ms(&self) -> u64 {
        self.video.max(self.guidance).max(self.code) + self.synth
    }

    pub fn serial_sum_ms(&self) -> u64 {
        self.video + self.guidance + self.code + self.synth
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadProfile {
    pub users: usize,
    pub queries_per_user: usize,
    pub delays: Delays,
    /// Back the ingestion queue with a store that rejects every write.
    pub failing_sink: bool,
}

/// A script where every specialist answers with high confidence after its
/// configured delay.
pub fn delay_script(d: Delays) -> ScriptedProvider {
    let report = |tag, delay, content: &str| {
        ScriptedBehavior::new(MatchRule::schema(tag))
            .structured(json!({ "confidence": 0.9, "relevance": "primary", "content": content }))
            .delay_ms(delay)
    };
    ScriptedProvider::new(vec![
        ScriptedBehavior::new(MatchRule::schema(SchemaTag::QuestionCategory))
            .structured(json!({ "category": "conceptual_quantum" })),
        report(SchemaTag::VideoReport, d.video, "The lecture covers this in the current segment."),
        report(SchemaTag::GuidanceReport, d.guidance, "Start from the definition of a basis state."),
        report(SchemaTag::CodeReport, d.code, "The circuit measures before applying the gate."),
        ScriptedBehavior::new(MatchRule::schema(SchemaTag::Synthesis)).structured(json!({})).delay_ms(d.synth),
    ])
    .with_timeout(Duration::from_secs(30))
}

/// Records how long each provider call took, by phase.
pub struct TimedProvider<P> {
    inner: P,
    samples: Mutex<BTreeMap<&'static str, Vec<f64>>>,
}

impl<P> TimedProvider<P> {
    pub fn new(inner: P) -> Self {
        Self { inner, samples: Mutex::new(BTreeMap::new()) }
    }

    pub fn samples(&self) -> BTreeMap<&'static str, Vec<f64>> {
        self.samples.lock().expect("samples lock").clone()
    }
}

fn phase(tag: Option<SchemaTag>) -> &'static str {
    match tag {
        Some(SchemaTag::VideoReport) => "video",
        Some(SchemaTag::GuidanceReport) => "guidance",
        Some(SchemaTag::CodeReport) => "code",
        Some(SchemaTag::Synthesis) => "synth",
        Some(SchemaTag::QuestionCategory) => "classify",
        _ => "other",
    }
}

#[async_trait]
impl<P: ModelProvider> ModelProvider for TimedProvider<P> {
    async fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, ProviderError> {
        let start = Instant::now();
        let out = self.inner.complete(request).await;
        let ms = start.elapsed().as_secs_f64() * 1000.0;
        self.samples.lock().expect("samples lock").entry(phase(request.response_schema)).or_default().push(ms);
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseStats {
    pub calls: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadReport {
    pub profile: LoadProfile,
    pub requests: usize,
    pub errors: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub mean_ms: f64,
    pub predicted_ms: u64,
    pub serial_sum_ms: u64,
    pub phases: BTreeMap<String, PhaseStats>,
    /// Telemetry writes the sink refused during the run.
    pub failed_telemetry_writes: u64,
}

const LOAD_QUESTION: &str = "Why does my circuit give the same counts for every input state?";
const LOAD_CODE: &str = "from qiskit import QuantumCircuit\nqc = QuantumCircuit(1)\nqc.measure_all()\nqc.h(0)\n";

/// Runs `profile` against a fresh in-process service and measures
/// end-to-end `/chat` latency from the client side.
pub async fn run_load(profile: &LoadProfile, files: &TestModeFiles) -> Result<LoadReport, HarnessError> {
    let provider = Arc::new(TimedProvider::new(delay_script(profile.delays)));
    let store: Arc<dyn EventStore> = Arc::new(FaultyStore::new(MemoryStore::new(), profile.failing_sink));
    let budget = Duration::from_millis(profile.delays.predicted_ms() * 2 + 2_000);
    let config = OrchestratorConfig { budget, ..OrchestratorConfig::default() };
    let service =
        LocalService::start(files, Arc::clone(&provider) as Arc<dyn ModelProvider>, store, config).await?;
    let client = reqwest::Client::builder().pool_max_idle_per_host(profile.users.max(1)).build()?;

    let mut sessions = Vec::with_capacity(profile.users);
    for i in 0..profile.users {
        let resp = client
            .post(service.url("/sessions"))
            .json(&json!({ "raw_student_ref": format!("load-user-{i}"), "module_id": 1 }))
            .send()
            .await?;
        let body: serde_json::Value = resp.json().await?;
        let id = body["session_id"].as_str().ok_or_else(|| HarnessError::Service(format!("session not created: {body}")))?;
        sessions.push(id.to_owned());
    }

    let barrier = Arc::new(Barrier::new(profile.users.max(1)));
    let mut tasks = Vec::new();
    for session in sessions {
        let client = client.clone();
        let url = service.url("/chat");
        let barrier = Arc::clone(&barrier);
        let n = profile.queries_per_user;
        tasks.push(tokio::spawn(async move {
            barrier.wait().await;
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let start = Instant::now();
                let ok = client
                    .post(&url)
                    .json(&json!({ "session_id": session, "text": LOAD_QUESTION, "code_context": LOAD_CODE }))
                    .send()
                    .await
                    .is_ok_and(|r| r.status().is_success());
                out.push((start.elapsed().as_secs_f64() * 1000.0, ok));
            }
            out
        }));
    }
    let mut latencies = Vec::new();
    let mut errors = 0;
    for t in tasks {
        for (ms, ok) in t.await.map_err(|e| HarnessError::Service(e.to_string()))? {
            latencies.push(ms);
            if !ok {
                errors += 1;
            }
        }
    }
    latencies.sort_by(f64::total_cmp);
    let mean = if latencies.is_empty() { 0.0 } else { latencies.iter().sum::<f64>() / latencies.len() as f64 };

    let phases = provider
        .samples()
        .into_iter()
        .map(|(name, mut v)| {
            v.sort_by(f64::total_cmp);
            (name.to_owned(), PhaseStats { calls: v.len(), p50_ms: percentile(&v, 50.0), p95_ms: percentile(&v, 95.0) })
        })
        .collect();

    Ok(LoadReport {
        profile: profile.clone(),
        requests: latencies.len(),
        errors,
        p50_ms: percentile(&latencies, 50.0),
        p95_ms: percentile(&latencies, 95.0),
        max_ms: latencies.last().copied().unwrap_or(0.0),
        mean_ms: mean,
        predicted_ms: profile.delays.predicted_ms(),
        serial_sum_ms: profile.delays.serial_sum_ms(),
        phases,
        failed_telemetry_writes: service.state.queue_stats().failed_writes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_four_delays() {
        let d = Delays::parse("2000, 1000,3000,500").unwrap();
        assert_eq!(d, Delays { video: 2000, guidance: 1000, code: 3000, synth: 500 });
        assert_eq!(d.predicted_ms(), 3500);
        assert_eq!(d.serial_sum_ms(), 6500);
        assert!(Delays::parse("1,2,3").is_err());
        assert!(Delays::parse("1,2,x,4").is_err());
    }
}
