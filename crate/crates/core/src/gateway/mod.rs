//! Chat-completion backends.
//!
//! [`Gateway`] talks to an OpenAI-style `/chat/completions` endpoint through a
//! [`Transport`], with a content-addressed response cache, retry with
//! exponential backoff and in-flight deduplication. The mock backends in
//! [`mock`] answer without any network access.

mod cache;
mod client;
mod exec;
pub mod mock;
pub mod stub_server;
mod transport;
pub mod wire;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::ActionLabel;

pub use cache::{CacheKey, CachedResponse, ResponseCache};
pub use client::Gateway;
pub use exec::run_bounded;
pub use transport::{HttpTransport, Transport, TransportFailure, WireCall, WireReply};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("HTTP {status}: {body}")]
    HttpError { status: u16, body: String },
    #[error("rate limited (HTTP 429) after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("API key environment variable {0} is not set")]
    AuthMissing(String),
    #[error("transport error: {0}")]
    TransportError(String),
    #[error("malformed response body: {0}")]
    InvalidResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cache error: {0}")]
    Cache(String),
    #[error("invalid backend config: {0}")]
    Config(String),
}

/// Connection and decoding settings for one backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    /// Base URL; `/chat/completions` is appended unless already present.
    pub endpoint_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key. Empty disables auth.
    pub api_key_env: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub parallelism: usize,
    /// First backoff delay; doubles on every retry.
    pub retry_base_delay_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            endpoint_url: "http://127.0.0.1:8000/v1".to_string(),
            model_name: "unset".to_string(),
            api_key_env: String::new(),
            temperature: 0.0,
            max_output_tokens: 1024,
            timeout_ms: 120_000,
            max_retries: 3,
            parallelism: 4,
            retry_base_delay_ms: 500,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(BackendError::Config("temperature must be >= 0".into()));
        }
        if self.parallelism < 1 {
            return Err(BackendError::Config("parallelism must be >= 1".into()));
        }
        if self.timeout_ms == 0 {
            return Err(BackendError::Config("timeout_ms must be > 0".into()));
        }
        Ok(())
    }

    pub fn chat_url(&self) -> String {
        let base = self.endpoint_url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

/// An image sent with a request. Bytes are read once at construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attachment {
    pub path: PathBuf,
    pub media_type: String,
    pub bytes: Arc<Vec<u8>>,
    pub sha256: String,
}

impl Attachment {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::from_bytes(path, std::fs::read(path)?))
    }

    pub fn from_bytes(path: &Path, bytes: Vec<u8>) -> Self {
        let media_type = match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("jpg") | Some("jpeg") => "image/jpeg",
            Some("webp") => "image/webp",
            Some("gif") => "image/gif",
            _ => "image/png",
        };
        Attachment {
            path: path.to_path_buf(),
            media_type: media_type.to_string(),
            sha256: crate::fsutil::sha256_hex(&bytes),
            bytes: Arc::new(bytes),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub content: String,
}

/// Ground truth handed to mock planners. Never sent on the wire and not part
/// of the cache key.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PlanContext {
    pub video_id: String,
    pub step_index: usize,
    /// Upcoming actions, nearest first.
    pub future: Vec<ActionLabel>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChatRequest {
    pub template_version: String,
    pub system_text: String,
    pub user_text: String,
    pub attachments: Vec<Attachment>,
    /// Turns that follow the first user message (assistant reply, follow-up, ...).
    pub followups: Vec<Turn>,
    pub context: Option<PlanContext>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Option<Usage>,
    pub latency_ms: u64,
    pub backend_id: String,
    pub retry_count: u32,
    pub from_cache: bool,
}

impl ChatResponse {
    pub fn local(text: impl Into<String>, backend_id: impl Into<String>) -> Self {
        ChatResponse {
            text: text.into(),
            usage: None,
            latency_ms: 0,
            backend_id: backend_id.into(),
            retry_count: 0,
            from_cache: false,
        }
    }
}

/// Anything that can answer a chat request.
pub trait Backend: Send + Sync {
    fn backend_id(&self) -> String;
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn backend_id(&self) -> String {
        (**self).backend_id()
    }
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).complete(request)
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn backend_id(&self) -> String {
        (**self).backend_id()
    }
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).complete(request)
    }
}

impl Backend for Box<dyn Backend> {
    fn backend_id(&self) -> String {
        (**self).backend_id()
    }
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).complete(request)
    }
}
