//! Service configuration: defaults, then environment, then an optional TOML
//! file given with `--config`.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;
use tutor_core::analytics::AnalyticsThresholds;
use tutor_core::telemetry::queue::DEFAULT_CAPACITY;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for {var}: {value:?}")]
    BadEnv { var: &'static str, value: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderSelection {
    /// Replays a behavior script; used by tests and the harness.
    Scripted { script: PathBuf },
    /// OpenAI-style chat completions, configured from `PROVIDER_*` variables.
    Http,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SandboxMode {
    Remote { url: String },
    /// Canned results from a rules file. Only allowed with `test_mode`.
    Stub { rules: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub provider: ProviderSelection,
    pub sandbox: SandboxMode,
    pub test_mode: bool,
    pub curriculum_path: PathBuf,
    pub event_log_path: PathBuf,
    pub telemetry_key: String,
    pub telemetry_capacity: usize,
    pub instructor_token: String,
    pub confidence_threshold: f64,
    pub chat_budget: Duration,
    pub analytics: AnalyticsThresholds,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            provider: ProviderSelection::Http,
            sandbox: SandboxMode::Remote { url: "http://127.0.0.1:8001".into() },
            test_mode: false,
            curriculum_path: PathBuf::from("fixtures/curriculum.json"),
            event_log_path: PathBuf::from("data/events.jsonl"),
            telemetry_key: String::new(),
            telemetry_capacity: DEFAULT_CAPACITY,
            instructor_token: String::new(),
            confidence_threshold: 0.4,
            chat_budget: Duration::from_secs(10),
            analytics: AnalyticsThresholds::default(),
        }
    }
}

/// Shape of the `--config` file. Every field is optional and overrides the
/// value from the environment.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    listen: Option<SocketAddr>,
    provider: Option<ProviderSelection>,
    sandbox: Option<SandboxMode>,
    test_mode: Option<bool>,
    curriculum: Option<PathBuf>,
    event_log: Option<PathBuf>,
    telemetry_key: Option<String>,
    telemetry_capacity: Option<usize>,
    instructor_token: Option<String>,
    confidence_threshold: Option<f64>,
    chat_budget_ms: Option<u64>,
    analytics: Option<AnalyticsThresholds>,
}

fn parsed<T: std::str::FromStr>(
    var: &'static str,
    lookup: &impl Fn(&str) -> Option<String>,
) -> Result<Option<T>, ConfigError> {
    match lookup(var) {
        None => Ok(None),
        Some(value) => value.trim().parse().map(Some).map_err(|_| ConfigError::BadEnv { var, value }),
    }
}

impl ServiceConfig {
    /// Reads the process environment, then applies `file` on top.
    pub fn load(file: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = Self::from_lookup(|k| std::env::var(k).ok().filter(|v| !v.is_empty()))?;
        if let Some(path) = file {
            let text =
                std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
            config.apply_toml(&text)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        if let Some(v) = parsed("LISTEN_ADDR", &lookup)? {
            c.listen = v;
        }
        if let Some(v) = parsed("TEST_MODE", &lookup)? {
            c.test_mode = v;
        }
        if let Some(script) = lookup("PROVIDER_SCRIPT") {
            c.provider = ProviderSelection::Scripted { script: script.into() };
        }
        if let Some(url) = lookup("SANDBOX_URL") {
            c.sandbox = SandboxMode::Remote { url };
        }
        if let Some(rules) = lookup("SANDBOX_STUB") {
            c.sandbox = SandboxMode::Stub { rules: rules.into() };
        }
        if let Some(v) = lookup("CURRICULUM_PATH") {
            c.curriculum_path = v.into();
        }
        if let Some(v) = lookup("EVENT_LOG_PATH") {
            c.event_log_path = v.into();
        }
        if let Some(v) = lookup("TELEMETRY_KEY") {
            c.telemetry_key = v;
        }
        if let Some(v) = parsed("TELEMETRY_CAPACITY", &lookup)? {
            c.telemetry_capacity = v;
        }
        if let Some(v) = lookup("INSTRUCTOR_TOKEN") {
            c.instructor_token = v;
        }
        if let Some(v) = parsed("CONFIDENCE_THRESHOLD", &lookup)? {
            c.confidence_threshold = v;
        }
        if let Some(ms) = parsed::<u64>("CHAT_BUDGET_MS", &lookup)? {
            c.chat_budget = Duration::from_millis(ms);
        }
        Ok(c)
    }

    pub fn apply_toml(&mut self, text: &str) -> Result<(), ConfigError> {
        let f: FileConfig = toml::from_str(text)?;
        macro_rules! take {
            ($($field:ident => $target:ident),*) => {
                $(if let Some(v) = f.$field { self.$target = v; })*
            };
        }
        take!(
            listen => listen,
            provider => provider,
            sandbox => sandbox,
            test_mode => test_mode,
            curriculum => curriculum_path,
            event_log => event_log_path,
            telemetry_key => telemetry_key,
            telemetry_capacity => telemetry_capacity,
            instructor_token => instructor_token,
            confidence_threshold => confidence_threshold,
            analytics => analytics
        );
        if let Some(ms) = f.chat_budget_ms {
            self.chat_budget = Duration::from_millis(ms);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if matches!(self.sandbox, SandboxMode::Stub { .. }) && !self.test_mode {
            return Err(ConfigError::Invalid("the stub sandbox requires test_mode = true".into()));
        }
        if self.telemetry_key.is_empty() {
            return Err(ConfigError::Invalid("TELEMETRY_KEY must be set".into()));
        }
        if self.instructor_token.is_empty() {
            return Err(ConfigError::Invalid("INSTRUCTOR_TOKEN must be set".into()));
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(ConfigError::Invalid("confidence_threshold must lie in [0, 1]".into()));
        }
        if self.telemetry_capacity == 0 {
            return Err(ConfigError::Invalid("telemetry_capacity must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn env(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: HashMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        move |k| map.get(k).cloned()
    }

    #[test]
    fn env_then_file() {
        let mut c = ServiceConfig::from_lookup(env(&[
            ("TELEMETRY_KEY", "k"),
            ("INSTRUCTOR_TOKEN", "t"),
            ("CONFIDENCE_THRESHOLD", "0.5"),
            ("PROVIDER_SCRIPT", "a.json"),
        ]))
        .unwrap();
        assert_eq!(c.confidence_threshold, 0.5);
        assert_eq!(c.provider, ProviderSelection::Scripted { script: "a.json".into() });
        c.apply_toml(
            "confidence_threshold = 0.6\ntest_mode = true\n[sandbox]\nmode = \"stub\"\nrules = \"s.json\"\n[analytics]\ndrop_threshold = 0.4\nv_min = 100\nc_low = 5\nc_high = 30\ne_high = 50\nalpha = 0.33\nproximity_window_s = 180\n",
        )
        .unwrap();
        assert_eq!(c.confidence_threshold, 0.6);
        assert_eq!(c.analytics.v_min, 100);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn stub_sandbox_needs_test_mode() {
        let c = ServiceConfig::from_lookup(env(&[
            ("TELEMETRY_KEY", "k"),
            ("INSTRUCTOR_TOKEN", "t"),
            ("SANDBOX_STUB", "stub.json"),
        ]))
        .unwrap();
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn missing_key_is_fatal() {
        let c = ServiceConfig::from_lookup(env(&[("INSTRUCTOR_TOKEN", "t")])).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn bad_numbers_are_reported() {
        let err = ServiceConfig::from_lookup(env(&[("TELEMETRY_CAPACITY", "lots")])).unwrap_err();
        assert!(matches!(err, ConfigError::BadEnv { var: "TELEMETRY_CAPACITY", .. }));
    }

    #[test]
    fn unknown_file_keys_rejected() {
        let mut c = ServiceConfig::default();
        assert!(c.apply_toml("listen_port = 3\n").is_err());
    }
}
