//! Blocking chat-completion client with retry, plus the debate backend built
//! on top of it.
//!
//! Requests use the common `{model, messages, temperature, max_tokens}` JSON
//! shape and read the reply from `choices[0].message.content`. Transport
//! errors, 429 and 5xx responses are retried with exponential backoff and
//! full jitter; any other 4xx fails immediately.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DebateBackend, DialogueSession, DialogueSetup, TurnRequest};
use crate::error::{Error, Result};
use crate::persona::STANCE_MARKER;

/// Environment variable holding the API key for the remote backend.
pub const API_KEY_ENV: &str = "PERSONA_DEBATE_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            base_backoff_ms: 500,
        }
    }
}

impl RetryPolicy {
    /// Upper bound of the jittered sleep before retry number `retry`
    /// (1-based): `base · 2^(retry−1)`.
    pub fn backoff_ceiling(&self, retry: u32) -> Duration {
        let factor = 1u64 << (retry.saturating_sub(1)).min(20);
        Duration::from_millis(self.base_backoff_ms.saturating_mul(factor))
    }

    fn jittered(&self, retry: u32) -> Duration {
        let ceiling = self.backoff_ceiling(retry);
        if ceiling.is_zero() {
            return ceiling;
        }
        ceiling.mul_f64(rand::rng().random::<f64>())
    }
}

// Defaults are placeholders, not settings known to match any published run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteBackendConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_response_tokens: u32,
    pub request_timeout_ms: u64,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
    pub api_key_env: String,
}

impl Default for RemoteBackendConfig {
    fn default() -> Self {
        RemoteBackendConfig {
            endpoint_url: "https://open.bigmodel.cn/api/paas/v4/chat/completions".into(),
            model_name: "glm-4-flash".into(),
            temperature: 0.7,
            max_response_tokens: 512,
            request_timeout_ms: 60_000,
            retry: RetryPolicy::default(),
            max_in_flight: 4,
            api_key_env: API_KEY_ENV.into(),
        }
    }
}

impl RemoteBackendConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.endpoint_url.trim().is_empty() {
            return bad("endpoint_url must not be empty");
        }
        if self.model_name.trim().is_empty() {
            return bad("model_name must not be empty");
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return bad("temperature must be >= 0");
        }
        if self.max_response_tokens == 0 {
            return bad("max_response_tokens must be positive");
        }
        if self.request_timeout_ms == 0 {
            return bad("request_timeout_ms must be positive");
        }
        if self.retry.max_attempts == 0 {
            return bad("retry.max_attempts must be at least 1");
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<&'a ChatMessage>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

/// Serialized request body. Stable for identical inputs.
pub fn request_body(config: &RemoteBackendConfig, system_prompt: &str, conversation: &[ChatMessage]) -> Vec<u8> {
    let system = ChatMessage {
        role: ChatRole::System,
        content: system_prompt.to_string(),
    };
    let request = ChatRequest {
        model: &config.model_name,
        messages: std::iter::once(&system).chain(conversation).collect(),
        temperature: config.temperature,
        max_tokens: config.max_response_tokens,
    };
    serde_json::to_vec(&request).expect("chat request serializes")
}

struct Permits {
    available: Mutex<usize>,
    freed: Condvar,
}

impl Permits {
    fn acquire(&self) -> PermitGuard<'_> {
        let mut n = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.freed.notify_one();
    }
}

enum Attempt {
    Done(String),
    Retry(String),
    Fatal(Error),
}

pub struct RemoteClient {
    config: RemoteBackendConfig,
    api_key: String,
    http: reqwest::blocking::Client,
    permits: Permits,
}

impl std::fmt::Debug for RemoteClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteClient")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl RemoteClient {
    pub fn new(config: RemoteBackendConfig, api_key: impl Into<String>) -> Result<Self> {
        config.validate()?;
        let api_key = api_key.into();
        if api_key.trim().is_empty() {
            return Err(Error::Config("API key is empty".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.request_timeout_ms))
            .build()
            .map_err(|e| Error::Config(format!("cannot build HTTP client: {e}")))?;
        let permits = Permits {
            available: Mutex::new(config.max_in_flight),
            freed: Condvar::new(),
        };
        Ok(RemoteClient {
            config,
            api_key,
            http,
            permits,
        })
    }

    /// Reads the API key from the variable named in `config.api_key_env`.
    pub fn from_env(config: RemoteBackendConfig) -> Result<Self> {
        let key = std::env::var(&config.api_key_env).map_err(|_| {
            Error::Environment(format!(
                "environment variable {} with the API key is not set",
                config.api_key_env
            ))
        })?;
        RemoteClient::new(config, key)
    }

    pub fn config(&self) -> &RemoteBackendConfig {
        &self.config
    }

    fn attempt(&self, body: &[u8]) -> Attempt {
        let _permit = self.permits.acquire();
        let response = self
            .http
            .post(&self.config.endpoint_url)
            .bearer_auth(&self.api_key)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_vec())
            .send();
        let response = match response {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(format!("transport error: {e}")),
        };
        let status = response.status();
        let text = match response.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(format!("failed reading body: {e}")),
        };
        if status.is_success() {
            let parsed: std::result::Result<ChatResponse, _> = serde_json::from_str(&text);
            return match parsed {
                Ok(r) => match r.choices.into_iter().next().and_then(|c| c.message.content) {
                    Some(content) => Attempt::Done(content),
                    None => Attempt::Fatal(Error::PermanentRequest {
                        status: status.as_u16(),
                        body: "response has no choices[0].message.content".into(),
                    }),
                },
                Err(e) => Attempt::Fatal(Error::PermanentRequest {
                    status: status.as_u16(),
                    body: format!("unreadable response ({e}): {text}"),
                }),
            };
        }
        if status.as_u16() == 429 || status.is_server_error() {
            Attempt::Retry(format!("HTTP {}: {}", status.as_u16(), text))
        } else {
            Attempt::Fatal(Error::PermanentRequest {
                status: status.as_u16(),
                body: text,
            })
        }
    }

    /// Sends one chat-completion request and returns the assistant text.
    pub fn complete(&self, system_prompt: &str, conversation: &[ChatMessage]) -> Result<String> {
        let body = request_body(&self.config, system_prompt, conversation);
        let policy = &self.config.retry;
        let mut last_error = String::new();
        for attempt in 1..=policy.max_attempts {
            if attempt > 1 {
                std::thread::sleep(policy.jittered(attempt - 1));
            }
            match self.attempt(&body) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(reason) => {
                    tracing::warn!(attempt, max = policy.max_attempts, %reason, "chat request failed");
                    last_error = reason;
                }
            }
        }
        Err(Error::BackendUnavailable {
            attempts: policy.max_attempts,
            last_error,
        })
    }
}

/// One-shot completion using the API key from the environment.
pub fn remote_complete(
    config: &RemoteBackendConfig,
    system_prompt: &str,
    conversation: &[ChatMessage],
) -> Result<String> {
    RemoteClient::from_env(config.clone())?.complete(system_prompt, conversation)
}

const OPENING_PROMPT: &str = "The discussion begins now. State your position on the claim.";

/// Builds the conversation as seen by the speaker: its own turns are
/// assistant messages, the opponent's are user messages.
pub fn speaker_conversation(request: &TurnRequest<'_>) -> Vec<ChatMessage> {
    let mut messages = Vec::with_capacity(request.history.len() + 3);
    if request.history.first().is_none_or(|t| t.speaker_id == request.speaker.id) {
        messages.push(ChatMessage::user(OPENING_PROMPT));
    }
    for turn in request.history {
        if turn.speaker_id == request.speaker.id {
            messages.push(ChatMessage::assistant(turn.text.clone()));
        } else {
            messages.push(ChatMessage::user(turn.text.clone()));
        }
    }
    if let Some(rejected) = request.rejected_reply {
        messages.push(ChatMessage::assistant(rejected));
        messages.push(ChatMessage::user(format!(
            "Your last message did not end with a stance line. Reply again and finish with \
             exactly one final line \"{STANCE_MARKER} BELIEVE\" or \"{STANCE_MARKER} REJECT\"."
        )));
    }
    messages
}

#[derive(Debug)]
pub struct RemoteBackend {
    client: RemoteClient,
}

impl RemoteBackend {
    pub fn new(client: RemoteClient) -> Self {
        RemoteBackend { client }
    }
}

struct RemoteSession<'a> {
    client: &'a RemoteClient,
}

impl DialogueSession for RemoteSession<'_> {
    fn respond(&mut self, request: &TurnRequest<'_>) -> Result<String> {
        let conversation = speaker_conversation(request);
        self.client.complete(request.system_prompt, &conversation)
    }
}

impl DebateBackend for RemoteBackend {
    fn kind(&self) -> &'static str {
        "remote"
    }

    fn settings(&self) -> serde_json::Value {
        let c = &self.client.config;
        serde_json::json!({
            "endpoint_url": c.endpoint_url,
            "model_name": c.model_name,
            "temperature": c.temperature,
            "max_response_tokens": c.max_response_tokens,
        })
    }

    fn open_session<'s>(&'s self, _setup: &DialogueSetup<'_>) -> Result<Box<dyn DialogueSession + 's>> {
        Ok(Box::new(RemoteSession { client: &self.client }))
    }
}
