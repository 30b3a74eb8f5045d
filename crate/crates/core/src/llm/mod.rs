//! Chat-completion client with live, replay and scripted backends.
//!
//! The live backend speaks the common chat-completions JSON contract: a POST
//! carrying `model`, `temperature` and `messages`, answered with
//! `choices[0].message.content`. Transient failures (HTTP 429, 5xx, timeouts
//! and connection errors) are retried with exponential backoff, and an
//! optional limiter caps dispatches per second.
//!
//! Replay and scripted backends never touch the network and are fully
//! deterministic, which is what the tests and `replay` subcommand rely on.

mod parse;
mod rate;
mod transcript;

use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::repr::{ChatTurn, Role};

pub use parse::{parse_route, ParseError};
pub use rate::RateLimiter;
pub use transcript::{Transcript, TranscriptEntry};

pub const DEFAULT_MODEL: &str = "gpt-4o-2024-08-06";
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("request failed after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response body: {0}")]
    BadBody(String),
    #[error("no recorded response for trial {trial}, agent {agent}, round {round}, attempt {attempt}", trial = .0.trial, agent = .0.agent, round = .0.round, attempt = .0.attempt)]
    ReplayMiss(RequestKey),
    #[error("scripted backend has no responses left")]
    ScriptExhausted,
    #[error("environment variable `{0}` with the API credential is not set")]
    MissingCredential(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("could not build HTTP client: {0}")]
    Client(String),
}

/// Identifies one completion attempt within an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RequestKey {
    pub trial: usize,
    pub agent: usize,
    pub round: usize,
    /// 0 for the first try, incremented on each re-prompt.
    pub attempt: usize,
}

/// A chat message in wire form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<Message>,
    pub key: RequestKey,
}

impl CompletionRequest {
    /// Maps turns to wire roles: the first becomes `system`, environment
    /// turns `user`, agent turns `assistant`.
    pub fn from_turns(
        model: &str,
        temperature: f64,
        turns: &[ChatTurn],
        key: RequestKey,
    ) -> Result<Self, LlmError> {
        if turns.is_empty() {
            return Err(LlmError::InvalidRequest("no messages".into()));
        }
        if !(temperature >= 0.0) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {temperature} must be nonnegative"
            )));
        }
        let messages = turns
            .iter()
            .enumerate()
            .map(|(i, t)| Message {
                role: match (i, t.role) {
                    (0, _) => "system",
                    (_, Role::Environment) => "user",
                    (_, Role::Agent) => "assistant",
                }
                .to_string(),
                content: t.content.clone(),
            })
            .collect();
        Ok(Self {
            model: model.to_string(),
            temperature,
            messages,
            key,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub latency: Duration,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

impl Completion {
    fn immediate(text: String) -> Self {
        Self {
            text,
            latency: Duration::ZERO,
            prompt_tokens: None,
            completion_tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32 << attempt.saturating_sub(1).min(16);
        (self.base_delay * factor).min(self.max_delay)
    }
}

#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub endpoint: String,
    pub api_key_env: String,
    pub rate_limit: Option<usize>,
    pub retry: RetryPolicy,
    pub timeout: Duration,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            endpoint: DEFAULT_ENDPOINT.into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            rate_limit: None,
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(120),
        }
    }
}

pub struct LiveBackend {
    http: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
    limiter: Option<RateLimiter>,
    retry: RetryPolicy,
}

impl LiveBackend {
    /// Reads the credential from the configured environment variable.
    pub fn from_env(config: LiveConfig) -> Result<Self, LlmError> {
        let key = std::env::var(&config.api_key_env)
            .map_err(|_| LlmError::MissingCredential(config.api_key_env.clone()))?;
        Self::with_key(config, Some(key))
    }

    pub fn with_key(config: LiveConfig, api_key: Option<String>) -> Result<Self, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::Client(e.to_string()))?;
        Ok(Self {
            http,
            endpoint: config.endpoint,
            api_key,
            limiter: config.rate_limit.map(RateLimiter::new),
            retry: config.retry,
        })
    }

    fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError> {
        let body = serde_json::json!({
            "model": request.model,
            "temperature": request.temperature,
            "messages": request.messages,
        });
        let started = Instant::now();
        let mut attempt = 0;
        loop {
            attempt += 1;
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            let mut builder = self.http.post(&self.endpoint).json(&body);
            if let Some(key) = &self.api_key {
                builder = builder.bearer_auth(key);
            }
            let (failure, retry_after) = match builder.send() {
                Ok(resp) if resp.status().is_success() => {
                    let value: serde_json::Value =
                        resp.json().map_err(|e| LlmError::BadBody(e.to_string()))?;
                    return parse_completion_body(&value, started.elapsed());
                }
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    let retry_after = resp
                        .headers()
                        .get(reqwest::header::RETRY_AFTER)
                        .and_then(|v| v.to_str().ok())
                        .and_then(|v| v.trim().parse::<u64>().ok())
                        .map(Duration::from_secs);
                    let text = resp.text().unwrap_or_default();
                    if !(status == 429 || (500..600).contains(&status)) {
                        return Err(LlmError::Http { status, body: text });
                    }
                    (format!("HTTP {status}: {text}"), retry_after)
                }
                Err(e) if e.is_timeout() || e.is_connect() || e.is_request() => {
                    (e.to_string(), None)
                }
                Err(e) => return Err(LlmError::Client(e.to_string())),
            };
            if attempt >= self.retry.max_attempts {
                return Err(LlmError::Exhausted {
                    attempts: attempt,
                    last: failure,
                });
            }
            let wait = retry_after
                .map(|d| d.min(self.retry.max_delay))
                .unwrap_or_else(|| self.retry.delay(attempt));
            log::warn!("transient completion failure ({failure}); retrying in {wait:?}");
            std::thread::sleep(wait);
        }
    }
}

fn parse_completion_body(
    value: &serde_json::Value,
    latency: Duration,
) -> Result<Completion, LlmError> {
    let text = value
        .pointer("/choices/0/message/content")
        .and_then(|v| v.as_str())
        .ok_or_else(|| LlmError::BadBody("missing choices[0].message.content".into()))?;
    Ok(Completion {
        text: text.to_string(),
        latency,
        prompt_tokens: value.pointer("/usage/prompt_tokens").and_then(|v| v.as_u64()),
        completion_tokens: value
            .pointer("/usage/completion_tokens")
            .and_then(|v| v.as_u64()),
    })
}

pub enum Backend {
    Live(Box<LiveBackend>),
    /// Stored responses keyed by request.
    Replay(HashMap<RequestKey, String>),
    /// Responses handed out in order, one per call.
    Scripted(Mutex<VecDeque<String>>),
}

impl Backend {
    pub fn scripted<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Backend::Scripted(Mutex::new(responses.into_iter().map(Into::into).collect()))
    }

    /// Replays every successful response recorded in `entries`.
    pub fn replay<'a>(entries: impl IntoIterator<Item = &'a TranscriptEntry>) -> Self {
        Backend::Replay(
            entries
                .into_iter()
                .filter_map(|e| e.response.clone().map(|r| (e.key, r)))
                .collect(),
        )
    }

    pub fn is_deterministic(&self) -> bool {
        !matches!(self, Backend::Live(_))
    }
}

/// Shared handle used by every language-model agent of an experiment.
pub struct LlmClient {
    backend: Backend,
    model: String,
    temperature: f64,
}

impl LlmClient {
    pub fn new(backend: Backend, model: impl Into<String>, temperature: f64) -> Self {
        Self {
            backend,
            model: model.into(),
            temperature,
        }
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn request(&self, turns: &[ChatTurn], key: RequestKey) -> Result<CompletionRequest, LlmError> {
        CompletionRequest::from_turns(&self.model, self.temperature, turns, key)
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError> {
        match &self.backend {
            Backend::Live(live) => live.complete(request),
            Backend::Replay(stored) => stored
                .get(&request.key)
                .cloned()
                .map(Completion::immediate)
                .ok_or(LlmError::ReplayMiss(request.key)),
            Backend::Scripted(queue) => queue
                .lock()
                .expect("script lock")
                .pop_front()
                .map(Completion::immediate)
                .ok_or(LlmError::ScriptExhausted),
        }
    }
}
