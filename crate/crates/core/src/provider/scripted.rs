//! Deterministic provider driven by an ordered list of behaviors.

use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{finish_response, ModelProvider, ModelRequest, ModelResponse, ProviderError, SchemaTag, DEFAULT_TIMEOUT};

/// Reply for requests no behavior matches.
pub const UNSCRIPTED: &str = "UNSCRIPTED";

/// A behavior matches when every populated field holds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<SchemaTag>,
    /// Substrings that must all appear somewhere in the request text.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contains: Vec<String>,
    /// Substrings that must all be absent from the request text.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excludes: Vec<String>,
}

impl MatchRule {
    pub fn schema(tag: SchemaTag) -> Self {
        Self { schema: Some(tag), ..Self::default() }
    }

    pub fn contains(mut self, needle: impl Into<String>) -> Self {
        self.contains.push(needle.into());
        self
    }

    fn matches(&self, request: &ModelRequest, text: &str) -> bool {
        if self.schema.is_some() && self.schema != request.response_schema {
            return false;
        }
        self.contains.iter().all(|n| text.contains(n.as_str())) && !self.excludes.iter().any(|n| text.contains(n.as_str()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureMode {
    Timeout,
    MalformedOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedBehavior {
    #[serde(rename = "match", alias = "match_rule", default)]
    pub match_rule: MatchRule,
    #[serde(default)]
    pub response_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structured: Option<serde_json::Value>,
    #[serde(default)]
    pub delay_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_mode: Option<FailureMode>,
}

impl ScriptedBehavior {
    pub fn new(match_rule: MatchRule) -> Self {
        Self { match_rule, response_text: String::new(), structured: None, delay_ms: 0, failure_mode: None }
    }

    pub fn text(mut self, t: impl Into<String>) -> Self {
        self.response_text = t.into();
        self
    }

    pub fn structured(mut self, v: serde_json::Value) -> Self {
        self.structured = Some(v);
        self
    }

    pub fn delay_ms(mut self, ms: u64) -> Self {
        self.delay_ms = ms;
        self
    }

    pub fn failing(mut self, mode: FailureMode) -> Self {
        self.failure_mode = Some(mode);
        self
    }
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("cannot read script {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("script parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
}

/// First matching behavior wins; unmatched requests get [`UNSCRIPTED`].
/// Every request is captured for later inspection.
pub struct ScriptedProvider {
    behaviors: Vec<ScriptedBehavior>,
    timeout: Duration,
    captured: Mutex<Vec<ModelRequest>>,
}

impl ScriptedProvider {
    pub fn new(behaviors: Vec<ScriptedBehavior>) -> Self {
        Self { behaviors, timeout: DEFAULT_TIMEOUT, captured: Mutex::new(Vec::new()) }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        if text.trim().is_empty() {
            return Ok(Self::new(Vec::new()));
        }
        let behaviors: Vec<ScriptedBehavior> = serde_json::from_str(text).map_err(|e| ScriptError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Ok(Self::new(behaviors))
    }

    /// Loads a JSON array of behaviors. An empty file is an empty script.
    pub fn load_script(path: impl AsRef<Path>) -> Result<Self, ScriptError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScriptError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn behaviors(&self) -> &[ScriptedBehavior] {
        &self.behaviors
    }

    pub fn captured(&self) -> Vec<ModelRequest> {
        self.captured.lock().expect("capture lock").clone()
    }

    pub fn calls_with_schema(&self, tag: SchemaTag) -> usize {
        self.captured.lock().expect("capture lock").iter().filter(|r| r.response_schema == Some(tag)).count()
    }

    pub fn clear_captured(&self) {
        self.captured.lock().expect("capture lock").clear();
    }

    fn select(&self, request: &ModelRequest) -> Option<&ScriptedBehavior> {
        let text = request.full_text();
        self.behaviors.iter().find(|b| b.match_rule.matches(request, &text))
    }
}

#[async_trait]
impl ModelProvider for ScriptedProvider {
    async fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, ProviderError> {
        request.validate()?;
        self.captured.lock().expect("capture lock").push(request.clone());
        let started = Instant::now();
        let budget_ms = self.timeout.as_millis() as u64;

        let Some(behavior) = self.select(request) else {
            return finish_response(request, UNSCRIPTED.to_owned(), None, elapsed_ms(started));
        };

        if behavior.failure_mode == Some(FailureMode::Timeout) || Duration::from_millis(behavior.delay_ms) > self.timeout {
            tokio::time::sleep(self.timeout).await;
            return Err(ProviderError::Timeout { budget_ms });
        }
        if behavior.delay_ms > 0 {
            tokio::time::sleep(Duration::from_millis(behavior.delay_ms)).await;
        }
        let latency = elapsed_ms(started);

        if behavior.failure_mode == Some(FailureMode::MalformedOutput) {
            return finish_response(request, "{\"truncated\": ".to_owned(), None, latency);
        }
        let text = if behavior.response_text.is_empty() {
            behavior.structured.as_ref().map(|v| v.to_string()).unwrap_or_default()
        } else {
            behavior.response_text.clone()
        };
        finish_response(request, text, behavior.structured.clone(), latency)
    }
}

fn elapsed_ms(started: Instant) -> u64 {
    started.elapsed().as_millis() as u64
}
