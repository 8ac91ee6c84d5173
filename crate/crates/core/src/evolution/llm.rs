//! Chat-completion backend over HTTP.
//!
//! Speaks the widely implemented `POST {endpoint}` chat-completions schema:
//! a single user message holding the rendered prompt, answered by
//! `choices[0].message.content`.

use std::thread;
use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::generator::{CandidateGenerator, GeneratorError, GeneratorRequest};
use super::prompt::extract_programs;
use crate::program::ProgramKind;

pub const DEFAULT_LLM_TEMPERATURE: f64 = 0.99;
pub const DEFAULT_API_KEY_ENV: &str = "GED_EVOLVE_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    /// Attempts per call, including the first.
    pub attempts: u32,
    /// Initial retry delay; doubled after each failed attempt.
    #[serde(with = "secs")]
    pub backoff: Duration,
    #[serde(with = "secs")]
    pub request_timeout: Duration,
    /// Consecutive failed calls after which the backend is declared gone.
    pub failure_limit: u32,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "default".into(),
            temperature: DEFAULT_LLM_TEMPERATURE,
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            attempts: 3,
            backoff: Duration::from_secs(2),
            request_timeout: Duration::from_secs(300),
            failure_limit: 5,
        }
    }
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

pub struct LlmBackend {
    config: LlmConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
    consecutive_failures: u32,
}

enum Attempt {
    Retry(String),
    Fatal(String),
}

impl LlmBackend {
    /// Reads the API key from the configured variable; a missing key is
    /// allowed for local servers that need none.
    pub fn new(config: LlmConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.request_timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            config,
            agent,
            api_key,
            consecutive_failures: 0,
        }
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<String, Attempt> {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| Attempt::Retry(format!("transport: {e}")))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retry(format!("reading body: {e}")))?;
        debug!("llm response ({status}): {text}");
        match status {
            200..=299 => {}
            401 | 403 | 404 => return Err(Attempt::Fatal(format!("HTTP {status}"))),
            _ => return Err(Attempt::Retry(format!("HTTP {status}"))),
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Attempt::Retry(format!("response is not JSON: {e}")))?;
        Ok(value["choices"][0]["message"]["content"].as_str().unwrap_or_default().to_string())
    }
}

impl CandidateGenerator for LlmBackend {
    fn name(&self) -> &str {
        "llm_http"
    }

    fn generate(&mut self, request: &GeneratorRequest) -> Result<Vec<ProgramKind>, GeneratorError> {
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": request.prompt()}],
        });
        // The key travels only in the header, so the body is safe to log.
        debug!("llm request to {}: {body}", self.config.endpoint);
        let mut delay = self.config.backoff;
        let mut last = String::new();
        for attempt in 1..=self.config.attempts.max(1) {
            match self.attempt(&body) {
                Ok(content) => {
                    self.consecutive_failures = 0;
                    let programs = extract_programs(&content);
                    if programs.is_empty() {
                        warn!("llm reply contained no usable code block");
                    }
                    return Ok(programs.into_iter().map(ProgramKind::python).collect());
                }
                Err(Attempt::Fatal(reason)) => return Err(GeneratorError::Unavailable(reason)),
                Err(Attempt::Retry(reason)) => {
                    warn!("llm attempt {attempt} failed: {reason}");
                    last = reason;
                    if attempt < self.config.attempts {
                        thread::sleep(delay);
                        delay = delay.saturating_mul(2);
                    }
                }
            }
        }
        self.consecutive_failures += 1;
        if self.consecutive_failures >= self.config.failure_limit {
            Err(GeneratorError::Unavailable(format!(
                "{} consecutive failed calls, last: {last}",
                self.consecutive_failures
            )))
        } else {
            Err(GeneratorError::Transient(last))
        }
    }
}
