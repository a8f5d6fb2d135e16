use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendConfig, BackendError, ChatRequest, ChatResponse, Usage};
use crate::fsutil;

/// SHA-256 over every input that can change a response.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn compute(config: &BackendConfig, request: &ChatRequest) -> CacheKey {
        let mut h = Sha256::new();
        let mut field = |bytes: &[u8]| {
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        };
        field(b"chat-cache-key/v1");
        field(config.model_name.as_bytes());
        field(request.template_version.as_bytes());
        field(request.system_text.as_bytes());
        field(request.user_text.as_bytes());
        field(&(request.attachments.len() as u64).to_le_bytes());
        for attachment in &request.attachments {
            field(attachment.sha256.as_bytes());
        }
        field(&(request.followups.len() as u64).to_le_bytes());
        for turn in &request.followups {
            field(turn.role.as_str().as_bytes());
            field(turn.content.as_bytes());
        }
        field(&config.temperature.to_bits().to_le_bytes());
        field(&config.max_output_tokens.to_le_bytes());
        CacheKey(hex::encode(h.finalize()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedResponse {
    pub model: String,
    pub backend_id: String,
    pub text: String,
    pub usage: Option<Usage>,
    pub latency_ms: u64,
}

/// On-disk cache: `<dir>/<2-hex-prefix>/<digest>.resp` plus `<dir>/index.tsv`.
#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    index_lock: Mutex<()>,
}

fn cache_err(e: impl std::fmt::Display) -> BackendError {
    BackendError::Cache(e.to_string())
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(cache_err)?;
        Ok(ResponseCache {
            dir,
            index_lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entry_path(&self, key: &CacheKey) -> PathBuf {
        self.dir
            .join(&key.as_str()[..2])
            .join(format!("{}.resp", key.as_str()))
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<CachedResponse>, BackendError> {
        let path = self.entry_path(key);
        match std::fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| cache_err(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(cache_err(e)),
        }
    }

    pub fn put(&self, key: &CacheKey, entry: &CachedResponse) -> Result<(), BackendError> {
        let bytes = serde_json::to_vec_pretty(entry).map_err(cache_err)?;
        fsutil::write_atomic(&self.entry_path(key), &bytes).map_err(cache_err)?;
        let _guard = self.index_lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut index = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.dir.join("index.tsv"))
            .map_err(cache_err)?;
        let line = format!(
            "{}\t{}\t{}\t{}\n",
            key.as_str(),
            entry.model,
            entry.backend_id,
            entry.text.len()
        );
        index.write_all(line.as_bytes()).map_err(cache_err)
    }

    pub fn len(&self) -> usize {
        std::fs::read_to_string(self.dir.join("index.tsv"))
            .map(|s| s.lines().count())
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl CachedResponse {
    pub fn into_response(self) -> ChatResponse {
        ChatResponse {
            text: self.text,
            usage: self.usage,
            latency_ms: self.latency_ms,
            backend_id: self.backend_id,
            retry_count: 0,
            from_cache: true,
        }
    }
}
