//! Chat-completion client with a content-addressed record/replay cache.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::prompts::{build_prompts, correction_prompt};
use super::{
    derive_seed, extract_action_lines, AgentContext, Policy, PolicyError, Session, SessionRecord,
};

pub const API_KEY_ENV: &str = "WARAGENT_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

/// Request body in the common chat-completion wire format. Field order is
/// fixed, so the serialized form is canonical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn canonical_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("request serializes")
    }

    /// Hex sha256 of the canonical JSON.
    pub fn cache_key(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json()))
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{}{message}", status.map(|s| format!("HTTP {s}: ")).unwrap_or_default())]
pub struct TransportError {
    /// `None` for connection-level failures.
    pub status: Option<u16>,
    pub message: String,
}

impl TransportError {
    pub fn retryable(&self) -> bool {
        match self.status {
            None => true,
            Some(s) => s == 408 || s == 429 || (500..600).contains(&s),
        }
    }
}

pub trait Transport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

/// Blocking HTTP transport.
pub struct HttpTransport {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(
        endpoint: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError {
                status: None,
                message: e.to_string(),
            })?;
        Ok(HttpTransport {
            endpoint: endpoint.into(),
            api_key,
            client,
        })
    }

    /// Reads the credential from `WARAGENT_API_KEY`.
    pub fn from_env(endpoint: impl Into<String>) -> Result<Self, TransportError> {
        Self::new(
            endpoint,
            std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            Duration::from_secs(120),
        )
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let mut builder = self
            .client
            .post(&self.endpoint)
            .header("content-type", "application/json")
            .body(request.canonical_json());
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| TransportError {
            status: e.status().map(|s| s.as_u16()),
            message: e.to_string(),
        })?;
        let status = response.status();
        let body = response.text().map_err(|e| TransportError {
            status: None,
            message: e.to_string(),
        })?;
        if !status.is_success() {
            return Err(TransportError {
                status: Some(status.as_u16()),
                message: body.chars().take(300).collect(),
            });
        }
        let value: serde_json::Value = serde_json::from_str(&body).map_err(|e| TransportError {
            status: Some(status.as_u16()),
            message: format!("response is not JSON: {e}"),
        })?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(String::from)
            .ok_or_else(|| TransportError {
                status: Some(status.as_u16()),
                message: "response lacks choices[0].message.content".into(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    /// Serve hits from cache, call the endpoint on misses and persist.
    Record,
    /// Serve from cache only.
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(16),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        self.base_delay
            .saturating_mul(1u32 << attempt.min(16))
            .min(self.max_delay)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    request: ChatRequest,
    response: String,
}

/// One JSON file per exchange, named by cache key.
#[derive(Debug, Clone)]
pub struct ChatCache {
    dir: PathBuf,
}

static TMP_COUNTER: AtomicUsize = AtomicUsize::new(0);

impl ChatCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ChatCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<String>, PolicyError> {
        let path = self.path(key);
        match fs::read_to_string(&path) {
            Ok(text) => {
                let entry: CacheEntry = serde_json::from_str(&text)
                    .map_err(|e| PolicyError::Cache(format!("{}: {e}", path.display())))?;
                Ok(Some(entry.response))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(PolicyError::Cache(format!("{}: {e}", path.display()))),
        }
    }

    /// Atomic write via rename; concurrent writers of one key store equal
    /// bytes, so the last rename wins harmlessly.
    pub fn put(&self, key: &str, request: &ChatRequest, response: &str) -> Result<(), PolicyError> {
        let err = |e: std::io::Error| PolicyError::Cache(format!("{}: {e}", self.dir.display()));
        fs::create_dir_all(&self.dir).map_err(err)?;
        let entry = CacheEntry {
            key: key.to_string(),
            request: request.clone(),
            response: response.to_string(),
        };
        let bytes = serde_json::to_vec_pretty(&entry).expect("entry serializes");
        let tmp = self.dir.join(format!(
            ".{key}.{}.{}.tmp",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let mut f = fs::File::create(&tmp).map_err(err)?;
        f.write_all(&bytes).map_err(err)?;
        f.sync_all().map_err(err)?;
        fs::rename(&tmp, self.path(key)).map_err(err)
    }
}

pub struct ChatClient {
    transport: Option<Arc<dyn Transport>>,
    cache: Option<ChatCache>,
    mode: CacheMode,
    retry: RetryPolicy,
    network_calls: AtomicUsize,
}

impl ChatClient {
    pub fn new(
        transport: Option<Arc<dyn Transport>>,
        cache: Option<ChatCache>,
        mode: CacheMode,
    ) -> Self {
        ChatClient {
            transport,
            cache,
            mode,
            retry: RetryPolicy::default(),
            network_calls: AtomicUsize::new(0),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Transport attempts made so far, retries included.
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::Relaxed)
    }

    /// Returns the response text and the exchange's cache key.
    pub fn chat(&self, request: &ChatRequest) -> Result<(String, String), PolicyError> {
        let key = request.cache_key();
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&key)? {
                return Ok((hit, key));
            }
        }
        if self.mode == CacheMode::Replay {
            return Err(PolicyError::ReplayMiss { key });
        }
        let transport = self
            .transport
            .as_ref()
            .ok_or_else(|| PolicyError::Unavailable("no chat endpoint configured".into()))?;
        let mut last = None;
        for attempt in 0..self.retry.max_attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(self.retry.delay(attempt - 1));
            }
            self.network_calls.fetch_add(1, Ordering::Relaxed);
            match transport.send(request) {
                Ok(text) => {
                    if let Some(cache) = &self.cache {
                        cache.put(&key, request, &text)?;
                    }
                    return Ok((text, key));
                }
                Err(e) => {
                    tracing::warn!(attempt, error = %e, "chat request failed");
                    let retry = e.retryable();
                    last = Some(e);
                    if !retry {
                        break;
                    }
                }
            }
        }
        Err(PolicyError::Unavailable(
            last.map(|e| e.to_string()).unwrap_or_default(),
        ))
    }
}

/// Four-stage prompt chain per fresh proposal, one exchange per correction.
pub struct ChatPolicy {
    client: Arc<ChatClient>,
    model: String,
    temperature: f64,
    master_seed: Option<u64>,
}

impl ChatPolicy {
    pub fn new(client: Arc<ChatClient>, model: impl Into<String>, temperature: f64) -> Self {
        assert!((0.0..=2.0).contains(&temperature), "temperature must lie in [0, 2]");
        ChatPolicy {
            client,
            model: model.into(),
            temperature,
            master_seed: None,
        }
    }

    /// Passes a per-agent derived seed to the endpoint.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = Some(seed);
        self
    }
}

impl Policy for ChatPolicy {
    fn begin<'a>(&'a self, ctx: &'a AgentContext) -> Box<dyn Session + 'a> {
        Box::new(ChatSession {
            policy: self,
            ctx,
            messages: Vec::new(),
            exchanges: Vec::new(),
            system: None,
        })
    }

    fn describe(&self) -> String {
        format!("chat:{}@{}", self.model, self.temperature)
    }
}

struct ChatSession<'a> {
    policy: &'a ChatPolicy,
    ctx: &'a AgentContext,
    messages: Vec<ChatMessage>,
    exchanges: Vec<String>,
    system: Option<String>,
}

impl ChatSession<'_> {
    fn call(&mut self) -> Result<String, PolicyError> {
        let request = ChatRequest {
            model: self.policy.model.clone(),
            messages: self.messages.clone(),
            temperature: self.policy.temperature,
            seed: self
                .policy
                .master_seed
                .map(|s| derive_seed(s, self.ctx.actor, self.ctx.round, 0)),
        };
        let (text, key) = self.policy.client.chat(&request)?;
        self.exchanges.push(key);
        self.messages.push(ChatMessage::assistant(text.clone()));
        Ok(text)
    }
}

impl Session for ChatSession<'_> {
    fn propose(&mut self, feedback: Option<&str>) -> Result<Vec<String>, PolicyError> {
        match feedback {
            Some(fb) if !self.messages.is_empty() => {
                self.messages
                    .push(ChatMessage::user(correction_prompt(self.ctx, fb)));
                let answer = self.call()?;
                Ok(extract_action_lines(&answer))
            }
            _ => {
                let prompts = build_prompts(self.ctx);
                self.messages = vec![ChatMessage::system(prompts.system.clone())];
                self.system = Some(prompts.system);
                let mut answer = String::new();
                for stage in prompts.stages {
                    self.messages.push(ChatMessage::user(stage));
                    answer = self.call()?;
                }
                Ok(extract_action_lines(&answer))
            }
        }
    }

    fn finish(self: Box<Self>) -> SessionRecord {
        SessionRecord {
            system: self.system,
            messages: self.messages,
            exchanges: self.exchanges,
        }
    }
}
