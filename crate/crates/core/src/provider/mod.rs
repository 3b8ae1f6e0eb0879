//! Model provider abstraction.
//!
//! Every agent reaches a language model through [`ModelProvider`]. Two
//! implementations ship: [`ScriptedProvider`] for tests and replays, and
//! [`HttpProvider`] for any chat-completions compatible endpoint.
//!
//! Structured output is requested with a [`SchemaTag`] and always validated
//! locally, so a provider that ignores the schema yields
//! [`ProviderError::MalformedStructuredOutput`] instead of bad data.

pub mod http;
mod schema;
mod scripted;

use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Turn;

pub use http::{HttpProvider, HttpProviderConfig};
pub use schema::SchemaTag;
pub use scripted::{FailureMode, MatchRule, ScriptError, ScriptedBehavior, ScriptedProvider, UNSCRIPTED};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(20);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub system_instructions: String,
    #[serde(default)]
    pub conversation: Vec<Turn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_schema: Option<SchemaTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_latency_hint_ms: Option<u64>,
}

impl ModelRequest {
    pub fn new(system_instructions: impl Into<String>) -> Self {
        Self {
            system_instructions: system_instructions.into(),
            conversation: Vec::new(),
            response_schema: None,
            max_latency_hint_ms: None,
        }
    }

    pub fn student(mut self, text: impl Into<String>) -> Self {
        self.conversation.push(Turn { role: crate::model::Role::Student, text: text.into() });
        self
    }

    pub fn schema(mut self, tag: SchemaTag) -> Self {
        self.response_schema = Some(tag);
        self
    }

    /// All request text, system instructions first. Used for matching and
    /// for scope audits.
    pub fn full_text(&self) -> String {
        let mut out = self.system_instructions.clone();
        for turn in &self.conversation {
            out.push('\n');
            out.push_str(&turn.text);
        }
        out
    }

    fn validate(&self) -> Result<(), ProviderError> {
        if self.system_instructions.trim().is_empty() {
            return Err(ProviderError::InvalidRequest("system_instructions must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structured: Option<serde_json::Value>,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProviderError {
    #[error("provider timed out after {budget_ms} ms")]
    Timeout { budget_ms: u64 },
    #[error("provider transport failure: {0}")]
    Transport(String),
    #[error("structured output did not match schema {schema}: {reason}")]
    MalformedStructuredOutput { schema: SchemaTag, reason: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl ProviderError {
    pub fn is_timeout(&self) -> bool {
        matches!(self, ProviderError::Timeout { .. })
    }
}

#[async_trait]
pub trait ModelProvider: Send + Sync {
    async fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, ProviderError>;
}

#[async_trait]
impl<P: ModelProvider + ?Sized> ModelProvider for std::sync::Arc<P> {
    async fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, ProviderError> {
        (**self).complete(request).await
    }
}

/// Checks `raw` against the request schema, if any, and builds the response.
pub(crate) fn finish_response(
    request: &ModelRequest,
    text: String,
    structured: Option<serde_json::Value>,
    latency_ms: u64,
) -> Result<ModelResponse, ProviderError> {
    let Some(schema) = request.response_schema else {
        return Ok(ModelResponse { text, structured: None, latency_ms });
    };
    let value = match structured {
        Some(v) => v,
        None => schema::extract_json(&text)
            .ok_or_else(|| ProviderError::MalformedStructuredOutput { schema, reason: "no JSON object in output".into() })?,
    };
    schema
        .validate(&value)
        .map_err(|reason| ProviderError::MalformedStructuredOutput { schema, reason })?;
    Ok(ModelResponse { text, structured: Some(value), latency_ms })
}
