//! Chat-completions clients: an HTTP client with retries and a shared
//! in-flight cap, plus deterministic fixtures for tests.

use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const ENV_ENDPOINT: &str = "WM_LLM_ENDPOINT";
pub const ENV_MODEL: &str = "WM_LLM_MODEL";
pub const ENV_KEY: &str = "WM_LLM_KEY";

#[derive(Debug, Error)]
pub enum GenError {
    #[error("generation failed after {attempts} attempt(s): {message}")]
    Failed { attempts: usize, message: String },
    #[error("no fixture response for prompt hash {0}")]
    NoFixture(String),
    #[error("client configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }
}

/// Body of `POST {endpoint}/chat/completions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

/// Anything that turns a chat request into a completion string.
pub trait TextGen: Send + Sync {
    fn complete(&self, messages: &[ChatMessage], temperature: f64) -> Result<String, GenError>;
}

/// SHA-256 (hex) of the last message's content; the key used by fixtures.
pub fn prompt_hash(messages: &[ChatMessage]) -> String {
    let content = messages.last().map(|m| m.content.as_str()).unwrap_or("");
    hex_digest(content.as_bytes())
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Counting semaphore bounding concurrent requests across clients.
#[derive(Debug)]
pub struct RequestGate {
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a> {
    gate: &'a RequestGate,
}

impl RequestGate {
    pub fn new(max: usize) -> Arc<Self> {
        Arc::new(Self {
            max: max.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        })
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().expect("gate lock");
        while *n >= self.max {
            n = self.freed.wait(n).expect("gate lock");
        }
        *n += 1;
        Permit { gate: self }
    }

    pub fn in_flight(&self) -> usize {
        *self.in_flight.lock().expect("gate lock")
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.gate.in_flight.lock().expect("gate lock");
        *n -= 1;
        self.gate.freed.notify_one();
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    /// Extra attempts after the first failure.
    pub retries: usize,
    pub backoff: Duration,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            retries: 3,
            backoff: Duration::from_millis(500),
        }
    }

    pub fn from_env() -> Result<Self, GenError> {
        let endpoint = std::env::var(ENV_ENDPOINT)
            .map_err(|_| GenError::Config(format!("{ENV_ENDPOINT} is not set")))?;
        let model = std::env::var(ENV_MODEL)
            .map_err(|_| GenError::Config(format!("{ENV_MODEL} is not set")))?;
        let mut cfg = Self::new(endpoint, model);
        cfg.api_key = std::env::var(ENV_KEY).ok().filter(|k| !k.is_empty());
        Ok(cfg)
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    message: ChatMessage,
}

pub struct HttpTextGen {
    cfg: HttpConfig,
    http: reqwest::blocking::Client,
    gate: Arc<RequestGate>,
}

impl HttpTextGen {
    pub fn new(cfg: HttpConfig, gate: Arc<RequestGate>) -> Result<Self, GenError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| GenError::Config(e.to_string()))?;
        Ok(Self { cfg, http, gate })
    }

    fn url(&self) -> String {
        format!(
            "{}/chat/completions",
            self.cfg.endpoint.trim_end_matches('/')
        )
    }

    fn attempt(&self, body: &ChatRequest) -> Result<String, (bool, String)> {
        let mut req = self.http.post(self.url()).json(body);
        if let Some(key) = &self.cfg.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| (true, e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let retryable = status.is_server_error() || status.as_u16() == 429;
            let text = resp.text().unwrap_or_default();
            return Err((retryable, format!("HTTP {status}: {text}")));
        }
        let parsed: CompletionResponse = resp.json().map_err(|e| (false, e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or((false, "response has no choices".to_string()))
    }
}

impl TextGen for HttpTextGen {
    fn complete(&self, messages: &[ChatMessage], temperature: f64) -> Result<String, GenError> {
        let body = ChatRequest {
            model: self.cfg.model.clone(),
            messages: messages.to_vec(),
            temperature,
        };
        let _permit = self.gate.acquire();
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err((retryable, message)) => {
                    if !retryable || attempts > self.cfg.retries {
                        return Err(GenError::Failed { attempts, message });
                    }
                    tracing::warn!(attempts, %message, "chat completion failed; retrying");
                    let factor = 1u32 << (attempts - 1).min(6);
                    std::thread::sleep(self.cfg.backoff * factor);
                }
            }
        }
    }
}

/// Fixed response table keyed by [`prompt_hash`].
#[derive(Debug, Default)]
pub struct MockTextGen {
    table: HashMap<String, String>,
    fallback: Option<String>,
    calls: Mutex<Vec<String>>,
}

impl MockTextGen {
    pub fn new(table: HashMap<String, String>) -> Self {
        Self {
            table,
            ..Self::default()
        }
    }

    /// Response returned when a prompt hash is not in the table.
    pub fn with_fallback(mut self, response: impl Into<String>) -> Self {
        self.fallback = Some(response.into());
        self
    }

    /// Loads a JSON object mapping prompt hash to response text.
    pub fn from_fixture(path: &Path) -> Result<Self, GenError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GenError::Config(format!("{}: {e}", path.display())))?;
        let table: HashMap<String, String> =
            serde_json::from_str(&text).map_err(|e| GenError::Config(e.to_string()))?;
        Ok(Self::new(table))
    }

    /// Prompt hashes seen so far, in call order.
    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().expect("mock lock").clone()
    }
}

impl TextGen for MockTextGen {
    fn complete(&self, messages: &[ChatMessage], _temperature: f64) -> Result<String, GenError> {
        let hash = prompt_hash(messages);
        self.calls.lock().expect("mock lock").push(hash.clone());
        self.table
            .get(&hash)
            .or(self.fallback.as_ref())
            .cloned()
            .ok_or(GenError::NoFixture(hash))
    }
}

/// Returns queued responses in order, regardless of the prompt.
#[derive(Debug, Default)]
pub struct ScriptedTextGen {
    queue: Mutex<VecDeque<Result<String, String>>>,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedTextGen {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            queue: Mutex::new(responses.into_iter().map(|r| Ok(r.into())).collect()),
            prompts: Mutex::new(Vec::new()),
        }
    }

    /// Queues a failure for the next call.
    pub fn push_failure(&self, message: impl Into<String>) {
        self.queue
            .lock()
            .expect("script lock")
            .push_back(Err(message.into()));
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().expect("script lock").clone()
    }

    pub fn call_count(&self) -> usize {
        self.prompts.lock().expect("script lock").len()
    }
}

impl TextGen for ScriptedTextGen {
    fn complete(&self, messages: &[ChatMessage], _temperature: f64) -> Result<String, GenError> {
        let content = messages
            .last()
            .map(|m| m.content.clone())
            .unwrap_or_default();
        self.prompts.lock().expect("script lock").push(content);
        match self.queue.lock().expect("script lock").pop_front() {
            Some(Ok(text)) => Ok(text),
            Some(Err(message)) => Err(GenError::Failed {
                attempts: 1,
                message,
            }),
            None => Err(GenError::Failed {
                attempts: 1,
                message: "script exhausted".into(),
            }),
        }
    }
}
