//! Chat-completion client over HTTP, with retries and a request-rate cap.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: "user".into(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClientError {
    #[error("missing credentials: environment variable {0} is not set")]
    MissingCredentials(String),
    #[error("authentication rejected (http {0})")]
    Auth(u16),
    #[error("http {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("unexpected response shape: {0}")]
    BadResponse(String),
}

impl ClientError {
    /// Rate limiting, server errors and transport failures are worth
    /// another attempt; auth and client errors are not.
    pub fn is_retryable(&self) -> bool {
        match self {
            ClientError::Status { status, .. } => *status == 429 || *status >= 500,
            ClientError::Transport(_) => true,
            _ => false,
        }
    }
}

pub trait ChatClient {
    /// Content of the first choice for a chat request.
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, ClientError>;

    /// Model name recorded with cached responses.
    fn model_name(&self) -> &str;

    fn temperature(&self) -> f64 {
        0.0
    }
}

impl<T: ChatClient + ?Sized> ChatClient for &T {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, ClientError> {
        (**self).complete(messages)
    }

    fn model_name(&self) -> &str {
        (**self).model_name()
    }

    fn temperature(&self) -> f64 {
        (**self).temperature()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChatClientConfig {
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token; `None` or an empty
    /// name sends no authorization header.
    pub api_key_env: Option<String>,
    pub temperature: f64,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub requests_per_minute: Option<u32>,
    pub headers: BTreeMap<String, String>,
}

impl Default for ChatClientConfig {
    fn default() -> Self {
        ChatClientConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-3.5-turbo".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            temperature: 0.0,
            timeout_secs: 60,
            max_retries: 3,
            backoff_ms: 1000,
            requests_per_minute: None,
            headers: BTreeMap::new(),
        }
    }
}

impl ChatClientConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err("temperature must be >= 0".into());
        }
        if self.requests_per_minute == Some(0) {
            return Err("requests_per_minute must be positive".into());
        }
        if self.endpoint.is_empty() || self.model.is_empty() {
            return Err("endpoint and model must be set".into());
        }
        Ok(())
    }

    pub fn request_body(&self, messages: &[ChatMessage]) -> Value {
        json!({ "model": self.model, "messages": messages, "temperature": self.temperature })
    }
}

/// Pulls `choices[0].message.content` out of a response body.
pub fn first_choice_content(body: &Value) -> Result<String, ClientError> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| ClientError::BadResponse(truncate(&body.to_string(), 200)))
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

/// Exponential backoff delay before retry `attempt` (1-based).
pub fn backoff_delay(base_ms: u64, attempt: u32) -> Duration {
    Duration::from_millis(base_ms.saturating_mul(1u64 << (attempt - 1).min(16)))
}

pub struct HttpChatClient {
    cfg: ChatClientConfig,
    agent: ureq::Agent,
    token: Option<String>,
    last_request: Mutex<Option<Instant>>,
}

impl HttpChatClient {
    pub fn new(cfg: ChatClientConfig) -> Result<Self, ClientError> {
        cfg.validate().map_err(ClientError::Transport)?;
        let token = match &cfg.api_key_env {
            Some(var) if !var.is_empty() => {
                Some(std::env::var(var).map_err(|_| ClientError::MissingCredentials(var.clone()))?)
            }
            _ => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpChatClient { cfg, agent, token, last_request: Mutex::new(None) })
    }

    fn wait_for_rate_limit(&self) {
        let Some(rpm) = self.cfg.requests_per_minute else { return };
        let gap = Duration::from_secs_f64(60.0 / f64::from(rpm));
        let mut last = self.last_request.lock().expect("rate limiter lock");
        if let Some(t) = *last {
            let since = t.elapsed();
            if since < gap {
                std::thread::sleep(gap - since);
            }
        }
        *last = Some(Instant::now());
    }

    fn attempt(&self, body: &Value) -> Result<String, ClientError> {
        self.wait_for_rate_limit();
        let mut req = self.agent.post(&self.cfg.endpoint).header("Content-Type", "application/json");
        if let Some(tok) = &self.token {
            req = req.header("Authorization", &format!("Bearer {tok}"));
        }
        for (k, v) in &self.cfg.headers {
            req = req.header(k, v);
        }
        let mut resp = req.send_json(body).map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 401 || status == 403 {
            return Err(ClientError::Auth(status));
        }
        if !(200..300).contains(&status) {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(ClientError::Status { status, body: truncate(&text, 200) });
        }
        let value: Value = resp.body_mut().read_json().map_err(|e| ClientError::BadResponse(e.to_string()))?;
        first_choice_content(&value)
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, ClientError> {
        let body = self.cfg.request_body(messages);
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() && attempt < self.cfg.max_retries => {
                    attempt += 1;
                    let delay = backoff_delay(self.cfg.backoff_ms, attempt);
                    log::warn!("request failed ({e}); retry {attempt} in {delay:?}");
                    std::thread::sleep(delay);
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn model_name(&self) -> &str {
        &self.cfg.model
    }

    fn temperature(&self) -> f64 {
        self.cfg.temperature
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_and_response_shapes() {
        let cfg = ChatClientConfig { model: "m".into(), ..Default::default() };
        let body = cfg.request_body(&[ChatMessage::user("hi")]);
        assert_eq!(body, json!({"model": "m", "messages": [{"role": "user", "content": "hi"}], "temperature": 0.0}));
        let resp = json!({"choices": [{"message": {"role": "assistant", "content": "(a; b; c)"}}]});
        assert_eq!(first_choice_content(&resp).unwrap(), "(a; b; c)");
        assert!(first_choice_content(&json!({"error": "x"})).is_err());
    }

    #[test]
    fn backoff_doubles() {
        assert_eq!(backoff_delay(100, 1), Duration::from_millis(100));
        assert_eq!(backoff_delay(100, 3), Duration::from_millis(400));
    }

    #[test]
    fn retry_classes() {
        assert!(ClientError::Status { status: 429, body: String::new() }.is_retryable());
        assert!(ClientError::Status { status: 503, body: String::new() }.is_retryable());
        assert!(!ClientError::Status { status: 400, body: String::new() }.is_retryable());
        assert!(!ClientError::Auth(401).is_retryable());
    }

    #[test]
    fn config_checks() {
        assert!(ChatClientConfig::default().validate().is_ok());
        assert!(ChatClientConfig { temperature: -1.0, ..Default::default() }.validate().is_err());
        let missing = ChatClientConfig { api_key_env: Some("DUALOIE_TEST_UNSET_KEY".into()), ..Default::default() };
        assert!(matches!(HttpChatClient::new(missing), Err(ClientError::MissingCredentials(_))));
    }

    #[test]
    fn unreachable_endpoint_surfaces_as_transport_error() {
        let cfg = ChatClientConfig {
            endpoint: "http://127.0.0.1:9/v1/chat/completions".into(),
            api_key_env: None,
            max_retries: 1,
            backoff_ms: 1,
            timeout_secs: 2,
            ..Default::default()
        };
        let client = HttpChatClient::new(cfg).unwrap();
        assert!(matches!(client.complete(&[ChatMessage::user("x")]), Err(ClientError::Transport(_))));
    }
}
