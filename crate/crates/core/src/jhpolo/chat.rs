use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_URL: &str = "CIRAL_LLM_URL";
pub const ENV_KEY: &str = "CIRAL_LLM_KEY";
pub const ENV_MODEL: &str = "CIRAL_LLM_MODEL";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChatError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("chat client configuration: {0}")]
    Config(String),
}

impl ChatError {
    /// Transport failures, rate limiting and server errors are worth retrying.
    pub fn is_retryable(&self) -> bool {
        match self {
            ChatError::Transport(_) => true,
            ChatError::Status { status, .. } => *status == 429 || *status >= 500,
            ChatError::Config(_) => false,
        }
    }
}

/// Sends a single-message prompt and returns the raw response body.
pub trait ChatClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, ChatError>;
}

/// Offline client answering every prompt through a closure.
pub struct MockChatClient {
    respond: Box<dyn Fn(&str) -> Result<String, ChatError> + Send + Sync>,
}

impl MockChatClient {
    /// Always returns `body`.
    pub fn fixed(body: impl Into<String>) -> Self {
        let body = body.into();
        Self::from_fn(move |_| Ok(body.clone()))
    }

    pub fn from_fn(f: impl Fn(&str) -> Result<String, ChatError> + Send + Sync + 'static) -> Self {
        Self { respond: Box::new(f) }
    }
}

impl ChatClient for MockChatClient {
    fn complete(&self, prompt: &str) -> Result<String, ChatError> {
        (self.respond)(prompt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpChatConfig {
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout_secs: u64,
}

impl Default for HttpChatConfig {
    fn default() -> Self {
        Self {
            url: String::new(),
            model: String::new(),
            api_key: None,
            timeout_secs: 120,
        }
    }
}

impl HttpChatConfig {
    /// Fills unset fields from `CIRAL_LLM_URL`, `CIRAL_LLM_KEY` and
    /// `CIRAL_LLM_MODEL`.
    pub fn with_env(mut self) -> Self {
        if self.url.is_empty() {
            self.url = std::env::var(ENV_URL).unwrap_or_default();
        }
        if self.model.is_empty() {
            self.model = std::env::var(ENV_MODEL).unwrap_or_default();
        }
        if self.api_key.is_none() {
            self.api_key = std::env::var(ENV_KEY).ok().filter(|k| !k.is_empty());
        }
        self
    }
}

/// Chat-completions client over HTTP.
pub struct HttpChatClient {
    agent: ureq::Agent,
    config: HttpChatConfig,
}

impl HttpChatClient {
    pub fn new(config: HttpChatConfig) -> Result<Self, ChatError> {
        if config.url.is_empty() {
            return Err(ChatError::Config(format!("no endpoint URL (set {ENV_URL})")));
        }
        if config.model.is_empty() {
            return Err(ChatError::Config(format!("no model name (set {ENV_MODEL})")));
        }
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build();
        Ok(Self {
            agent: ureq::Agent::new_with_config(agent_config),
            config,
        })
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, prompt: &str) -> Result<String, ChatError> {
        let payload = serde_json::json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut req = self.agent.post(&self.config.url);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&payload).map_err(|e| ChatError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ChatError::Transport(e.to_string()))?;
        if (200..300).contains(&status) {
            Ok(body)
        } else {
            Err(ChatError::Status { status, body })
        }
    }
}

/// Retry and throttling for a batch of requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RequestPolicy {
    /// Attempts after the first one.
    pub max_retries: u32,
    /// Delay before the first retry; doubles on each further attempt.
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    /// Requests in flight at once.
    pub concurrency: usize,
    /// Minimum spacing between request starts.
    pub min_interval_ms: u64,
}

impl Default for RequestPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay_ms: 1000,
            max_delay_ms: 30_000,
            concurrency: 4,
            min_interval_ms: 0,
        }
    }
}

impl RequestPolicy {
    pub fn backoff(&self, retry: u32) -> Duration {
        let ms = self.base_delay_ms.saturating_mul(1u64 << retry.min(32));
        Duration::from_millis(ms.min(self.max_delay_ms))
    }
}

/// Spaces out request starts across threads.
pub(crate) struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub(crate) fn new(interval: Duration) -> Self {
        Self {
            interval,
            next: Mutex::new(None),
        }
    }

    pub(crate) fn wait(&self) {
        if self.interval.is_zero() {
            return;
        }
        let start = {
            let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let start = next.map_or(now, |n| n.max(now));
            *next = Some(start + self.interval);
            start
        };
        let now = Instant::now();
        if start > now {
            std::thread::sleep(start - now);
        }
    }
}

/// Calls the client, retrying retryable errors with exponential backoff.
pub(crate) fn complete_with_retry(
    client: &dyn ChatClient,
    prompt: &str,
    policy: &RequestPolicy,
    limiter: &RateLimiter,
) -> Result<String, ChatError> {
    let mut retry = 0;
    loop {
        limiter.wait();
        match client.complete(prompt) {
            Ok(body) => return Ok(body),
            Err(e) if e.is_retryable() && retry < policy.max_retries => {
                log::warn!("chat request failed ({e}); retry {} of {}", retry + 1, policy.max_retries);
                std::thread::sleep(policy.backoff(retry));
                retry += 1;
            }
            Err(e) => return Err(e),
        }
    }
}
