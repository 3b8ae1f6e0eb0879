//! Client side of the code-execution boundary.
//!
//! Student code never runs in this process. [`RemoteSandbox`] forwards to the
//! isolated execution service; [`StubSandbox`] returns canned results and is
//! only constructed in test mode.

use std::time::Duration;

use async_trait::async_trait;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{match_catalog, ErrorCategory, KnownError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub stdout: String,
    pub stderr: String,
    pub exit_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_category: Option<ErrorCategory>,
    pub duration_ms: u64,
}

impl ExecutionResult {
    pub fn success(stdout: impl Into<String>) -> Self {
        Self { stdout: stdout.into(), stderr: String::new(), exit_ok: true, error_category: None, duration_ms: 0 }
    }

    pub fn failure(stderr: impl Into<String>, category: ErrorCategory) -> Self {
        Self { stdout: String::new(), stderr: stderr.into(), exit_ok: false, error_category: Some(category), duration_ms: 0 }
    }

    /// Restores the category-iff-failure invariant, categorizing from stderr
    /// when the producer left the category out.
    pub fn normalized(mut self, catalog: &[KnownError]) -> Self {
        if self.exit_ok {
            self.error_category = None;
        } else if self.error_category.is_none() {
            self.error_category = Some(classify_stderr(&self.stderr, catalog));
        }
        self
    }
}

/// Maps error text to a category: catalog entries first, then the generic
/// Python/SDK signatures.
pub fn classify_stderr(stderr: &str, catalog: &[KnownError]) -> ErrorCategory {
    if let Some(known) = match_catalog(catalog, stderr) {
        return known.category;
    }
    const RULES: &[(&str, ErrorCategory)] = &[
        (r"SyntaxError|IndentationError|TabError", ErrorCategory::Syntax),
        (r"TimeoutError|[Tt]ime limit|timed out", ErrorCategory::Timeout),
        (r"cannot import name|DeprecationWarning|deprecated|has no attribute '(execute|Aer|assemble)'", ErrorCategory::DeprecatedApi),
        (r"ModuleNotFoundError|No module named|ImportError|MissingOptionalLibraryError", ErrorCategory::MissingDependency),
        (r"QiskitError|CircuitError|Qiskit", ErrorCategory::ApiMisuse),
        (r"ValueError|shape|dimension|NameError|is not defined|ZeroDivisionError|LinAlgError", ErrorCategory::Mathematical),
    ];
    RULES
        .iter()
        .find(|(pattern, _)| Regex::new(pattern).expect("static pattern").is_match(stderr))
        .map(|(_, c)| *c)
        .unwrap_or(ErrorCategory::Other)
}

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("sandbox unavailable: {0}")]
    Unavailable(String),
}

#[async_trait]
pub trait Sandbox: Send + Sync {
    async fn execute(&self, source: &str) -> Result<ExecutionResult, SandboxError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StubRule {
    /// Substrings that must all occur in the source.
    pub contains: Vec<String>,
    pub result: ExecutionResult,
}

/// Canned execution results for test mode. First matching rule wins;
/// otherwise the source "runs" successfully with empty output.
#[derive(Debug, Clone, Default)]
pub struct StubSandbox {
    rules: Vec<StubRule>,
    catalog: Vec<KnownError>,
}

impl StubSandbox {
    pub fn new(rules: Vec<StubRule>, catalog: Vec<KnownError>) -> Self {
        Self { rules, catalog }
    }

    pub fn from_json(text: &str, catalog: Vec<KnownError>) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(text)?, catalog))
    }

    pub fn run(&self, source: &str) -> ExecutionResult {
        self.rules
            .iter()
            .find(|r| r.contains.iter().all(|c| source.contains(c.as_str())))
            .map(|r| r.result.clone())
            .unwrap_or_else(|| ExecutionResult::success(""))
            .normalized(&self.catalog)
    }
}

#[async_trait]
impl Sandbox for StubSandbox {
    async fn execute(&self, source: &str) -> Result<ExecutionResult, SandboxError> {
        Ok(self.run(source))
    }
}

#[derive(Serialize)]
struct ExecuteRequest<'a> {
    source: &'a str,
    timeout_ms: u64,
    memory_limit_mb: u64,
}

pub struct RemoteSandbox {
    url: String,
    client: reqwest::Client,
    timeout_ms: u64,
    memory_limit_mb: u64,
    catalog: Vec<KnownError>,
}

impl RemoteSandbox {
    pub fn new(url: impl Into<String>, catalog: Vec<KnownError>) -> Result<Self, SandboxError> {
        let timeout_ms = 10_000;
        let client = reqwest::Client::builder()
            .timeout(Duration::from_millis(timeout_ms + 5_000))
            .build()
            .map_err(|e| SandboxError::Unavailable(e.to_string()))?;
        Ok(Self { url: url.into(), client, timeout_ms, memory_limit_mb: 512, catalog })
    }
}

#[async_trait]
impl Sandbox for RemoteSandbox {
    async fn execute(&self, source: &str) -> Result<ExecutionResult, SandboxError> {
        let url = format!("{}/execute", self.url.trim_end_matches('/'));
        let body = ExecuteRequest { source, timeout_ms: self.timeout_ms, memory_limit_mb: self.memory_limit_mb };
        let resp = self
            .client
            .post(url)
            .json(&body)
            .send()
            .await
            .map_err(|e| SandboxError::Unavailable(e.without_url().to_string()))?;
        if !resp.status().is_success() {
            return Err(SandboxError::Unavailable(format!("sandbox returned HTTP {}", resp.status())));
        }
        let result: ExecutionResult =
            resp.json().await.map_err(|e| SandboxError::Unavailable(e.without_url().to_string()))?;
        Ok(result.normalized(&self.catalog))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stderr_taxonomy() {
        let cases = [
            ("QiskitError: 'other is not a number'", ErrorCategory::ApiMisuse),
            ("ModuleNotFoundError: No module named 'pylatexenc'", ErrorCategory::MissingDependency),
            ("ImportError: cannot import name 'execute' from 'qiskit'", ErrorCategory::DeprecatedApi),
            ("ValueError: operands could not be broadcast together with shapes (2,) (4,)", ErrorCategory::Mathematical),
            ("  File \"<cell>\", line 3\nSyntaxError: invalid syntax", ErrorCategory::Syntax),
            ("killed: time limit exceeded", ErrorCategory::Timeout),
            ("Segmentation fault", ErrorCategory::Other),
        ];
        for (stderr, want) in cases {
            assert_eq!(classify_stderr(stderr, &[]), want, "{stderr}");
        }
    }

    #[test]
    fn catalog_overrides_generic_rules() {
        let catalog = vec![KnownError {
            pattern: "pylatexenc".into(),
            category: ErrorCategory::Other,
            hint: "x".into(),
        }];
        assert_eq!(classify_stderr("No module named 'pylatexenc'", &catalog), ErrorCategory::Other);
    }

    #[test]
    fn stub_normalizes_invariant() {
        let stub = StubSandbox::new(
            vec![StubRule {
                contains: vec!["draw('mpl')".into()],
                result: ExecutionResult {
                    stdout: String::new(),
                    stderr: "ModuleNotFoundError: No module named 'pylatexenc'".into(),
                    exit_ok: false,
                    error_category: None,
                    duration_ms: 3,
                },
            }],
            vec![],
        );
        let r = stub.run("qc.draw('mpl')");
        assert_eq!(r.error_category, Some(ErrorCategory::MissingDependency));
        let ok = stub.run("print(1)");
        assert!(ok.exit_ok && ok.error_category.is_none());
    }
}
