//! Content-addressed response cache: one file per request digest.
//!
//! A hit returns the stored text byte-identically with `origin = cache` and
//! issues no inner call. A miss calls the wrapped backend, then persists via
//! write-to-temp-then-rename so a crash never leaves a half-written entry.
//! Entries failing their integrity digest are treated as misses and
//! rewritten. Concurrent writers of the same key produce identical content,
//! so last-writer-wins is benign.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::request::{cache_key, CacheKey, ModelRequest, ModelResponse, Origin};
use super::{Backend, BackendError};

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    request_digest: String,
    response_text: String,
    usage: Usage,
    created_at: String,
    integrity_digest: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Usage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

fn integrity_digest(request_digest: &str, response_text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(request_digest.as_bytes());
    hasher.update(b"\n");
    hasher.update(response_text.as_bytes());
    hex::encode(hasher.finalize())
}

pub struct CachedBackend {
    inner: Arc<dyn Backend>,
    dir: PathBuf,
    calls: AtomicU64,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl CachedBackend {
    pub fn new(inner: Arc<dyn Backend>, cache_dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = cache_dir.into();
        std::fs::create_dir_all(&dir)
            .map_err(|e| BackendError::CacheIo(format!("cannot create {}: {e}", dir.display())))?;
        Ok(CachedBackend {
            inner,
            dir,
            calls: AtomicU64::new(0),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        })
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::SeqCst)
    }

    /// Calls the wrapped backend has served (equals misses by construction).
    pub fn inner_calls(&self) -> u64 {
        self.inner.calls_made()
    }

    fn entry_path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{}.json", key.as_str()))
    }

    fn load_entry(&self, path: &Path, key: &CacheKey) -> Result<CacheEntry, BackendError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| BackendError::CacheCorrupt(format!("unreadable entry: {e}")))?;
        let entry: CacheEntry = serde_json::from_str(&raw)
            .map_err(|e| BackendError::CacheCorrupt(format!("undecodable entry: {e}")))?;
        if entry.request_digest != key.as_str() {
            return Err(BackendError::CacheCorrupt("digest mismatch".into()));
        }
        if entry.integrity_digest != integrity_digest(&entry.request_digest, &entry.response_text) {
            return Err(BackendError::CacheCorrupt("integrity digest mismatch".into()));
        }
        Ok(entry)
    }

    fn persist(&self, key: &CacheKey, response: &ModelResponse) -> Result<(), BackendError> {
        let entry = CacheEntry {
            request_digest: key.as_str().to_string(),
            response_text: response.text.clone(),
            usage: Usage {
                prompt_tokens: response.prompt_tokens,
                completion_tokens: response.completion_tokens,
            },
            created_at: chrono::Utc::now().to_rfc3339(),
            integrity_digest: integrity_digest(key.as_str(), &response.text),
        };
        let body = serde_json::to_vec_pretty(&entry)
            .map_err(|e| BackendError::CacheIo(format!("encode entry: {e}")))?;
        static TMP_SEQ: AtomicU64 = AtomicU64::new(0);
        let final_path = self.entry_path(key);
        let tmp_path = self.dir.join(format!(
            ".{}.{}.{}.tmp",
            key.as_str(),
            std::process::id(),
            TMP_SEQ.fetch_add(1, Ordering::Relaxed),
        ));
        std::fs::write(&tmp_path, &body)
            .map_err(|e| BackendError::CacheIo(format!("write {}: {e}", tmp_path.display())))?;
        std::fs::rename(&tmp_path, &final_path)
            .map_err(|e| BackendError::CacheIo(format!("rename into {}: {e}", final_path.display())))?;
        Ok(())
    }
}

impl Backend for CachedBackend {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        request.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let key = cache_key(request);
        let path = self.entry_path(&key);
        if path.exists() {
            let started = Instant::now();
            match self.load_entry(&path, &key) {
                Ok(entry) => {
                    self.hits.fetch_add(1, Ordering::SeqCst);
                    return Ok(ModelResponse {
                        text: entry.response_text,
                        prompt_tokens: entry.usage.prompt_tokens,
                        completion_tokens: entry.usage.completion_tokens,
                        latency: started.elapsed(),
                        origin: Origin::Cache,
                    });
                }
                // Corrupt entries fall through to a fresh call and rewrite.
                Err(BackendError::CacheCorrupt(_)) => {}
                Err(other) => return Err(other),
            }
        }
        self.misses.fetch_add(1, Ordering::SeqCst);
        let response = self.inner.complete(request)?;
        self.persist(&key, &response)?;
        Ok(response)
    }

    fn calls_made(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}
