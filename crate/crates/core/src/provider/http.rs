//! Adapter for OpenAI-style `/chat/completions` endpoints.

use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::Deserialize;
use serde_json::json;

use super::{finish_response, ModelProvider, ModelRequest, ModelResponse, ProviderError, DEFAULT_TIMEOUT};
use crate::model::Role;

#[derive(Debug, Clone)]
pub struct HttpProviderConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
}

impl HttpProviderConfig {
    /// Reads `PROVIDER_BASE_URL`, `PROVIDER_API_KEY` and `PROVIDER_MODEL`.
    pub fn from_env() -> Option<Self> {
        let base_url = std::env::var("PROVIDER_BASE_URL").ok()?;
        Some(Self {
            base_url,
            api_key: std::env::var("PROVIDER_API_KEY").ok().filter(|k| !k.is_empty()),
            model: std::env::var("PROVIDER_MODEL").unwrap_or_else(|_| "default".into()),
            timeout: DEFAULT_TIMEOUT,
        })
    }
}

pub struct HttpProvider {
    config: HttpProviderConfig,
    client: reqwest::Client,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig) -> Result<Self, ProviderError> {
        let client = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(Self { config, client })
    }

    fn body(&self, request: &ModelRequest) -> serde_json::Value {
        let mut system = request.system_instructions.clone();
        if let Some(schema) = request.response_schema {
            system.push_str("\n\nRespond with a single JSON object of this shape and nothing else:\n");
            system.push_str(schema.describe());
        }
        let mut messages = vec![json!({"role": "system", "content": system})];
        for turn in &request.conversation {
            let role = match turn.role {
                Role::Student => "user",
                Role::Tutor => "assistant",
            };
            messages.push(json!({"role": role, "content": turn.text}));
        }
        let mut body = json!({"model": self.config.model, "messages": messages});
        if request.response_schema.is_some() {
            body["response_format"] = json!({"type": "json_object"});
        }
        body
    }
}

#[async_trait]
impl ModelProvider for HttpProvider {
    async fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, ProviderError> {
        request.validate()?;
        let started = Instant::now();
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut call = self.client.post(url).json(&self.body(request));
        if let Some(key) = &self.config.api_key {
            call = call.bearer_auth(key);
        }
        let budget_ms = self.config.timeout.as_millis() as u64;
        let response = call.send().await.map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout { budget_ms }
            } else {
                ProviderError::Transport(e.without_url().to_string())
            }
        })?;
        let status = response.status();
        if !status.is_success() {
            return Err(ProviderError::Transport(format!("provider returned HTTP {status}")));
        }
        let parsed: ChatResponse = response.json().await.map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout { budget_ms }
            } else {
                ProviderError::Transport(format!("unreadable completion body: {}", e.without_url()))
            }
        })?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::Transport("completion had no choices".into()))?;
        finish_response(request, text, None, started.elapsed().as_millis() as u64)
    }
}
