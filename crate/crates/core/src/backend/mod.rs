//! Uniform chat-completion access.
//!
//! Three interchangeable backends sit behind the [`Backend`] trait: a wire
//! client for remote chat-completion endpoints ([`HttpBackend`]), a
//! deterministic scripted stand-in for tests ([`ScriptedBackend`]), and a
//! content-addressed file cache wrapping either ([`CachedBackend`]).

mod cache;
mod http;
mod request;
mod scripted;

use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

pub use cache::CachedBackend;
pub use http::{HttpBackend, RetryPolicy};
pub use request::{cache_key, CacheKey, Message, ModelRequest, ModelResponse, Origin, Role};
pub use scripted::ScriptedBackend;

/// Environment variable holding the bearer token for live backends.
pub const API_KEY_ENV: &str = "EXCLUSION_API_KEY";
/// Environment variable holding the default live endpoint URL.
pub const BASE_URL_ENV: &str = "EXCLUSION_BASE_URL";

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("malformed backend reply: {0}")]
    BadReply(String),
    #[error("scripted backend has no reply for request digest {digest}")]
    ScriptExhausted { digest: String },
    #[error("cache entry corrupt: {0}")]
    CacheCorrupt(String),
    #[error("cache i/o: {0}")]
    CacheIo(String),
    #[error("backend config: {0}")]
    Config(String),
}

impl BackendError {
    /// True when every later call is likely to fail the same way: wire
    /// trouble, or a scripted backend with nothing left to serve. This is
    /// the class that counts toward an unreachable-backend abort;
    /// everything else is content-shaped.
    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            BackendError::Transport { .. } | BackendError::ScriptExhausted { .. }
        )
    }
}

/// A chat-completion provider.
///
/// Implementations must be safe under concurrent calls from many in-flight
/// problems. `calls_made` counts completed `complete` invocations on this
/// handle, which is what trace accounting checks against.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError>;
    fn calls_made(&self) -> u64;
}

impl<T: Backend + ?Sized> Backend for std::sync::Arc<T> {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        (**self).complete(request)
    }

    fn calls_made(&self) -> u64 {
        (**self).calls_made()
    }
}

/// Which backend a run talks to, parsed from a `live:<url>` or
/// `scripted:<path>` selector.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendKind {
    Live { base_url: String },
    Scripted { path: PathBuf },
}

/// Resolved backend settings for one run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub model_id: String,
    pub max_tokens: u32,
    #[serde(default = "RetryPolicy::default")]
    pub retry: RetryPolicy,
    /// Per-attempt request timeout in milliseconds.
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    60_000
}

impl BackendConfig {
    /// Parse a `live:<url>` or `scripted:<path>` selector.
    pub fn from_selector(selector: &str, model_id: impl Into<String>) -> Result<Self, BackendError> {
        let kind = match selector.split_once(':') {
            Some(("live", url)) if !url.is_empty() => BackendKind::Live { base_url: url.to_string() },
            Some(("scripted", path)) if !path.is_empty() => {
                BackendKind::Scripted { path: PathBuf::from(path) }
            }
            _ => {
                return Err(BackendError::Config(format!(
                    "backend selector must be live:<url> or scripted:<path>, got {selector:?}"
                )))
            }
        };
        Ok(BackendConfig {
            kind,
            model_id: model_id.into(),
            max_tokens: 1024,
            retry: RetryPolicy::default(),
            timeout_ms: default_timeout_ms(),
        })
    }

    /// Build the configured backend. Live backends read their bearer token
    /// from `EXCLUSION_API_KEY`.
    pub fn build(&self) -> Result<Box<dyn Backend>, BackendError> {
        match &self.kind {
            BackendKind::Live { base_url } => {
                let api_key = std::env::var(API_KEY_ENV).ok();
                Ok(Box::new(HttpBackend::new(
                    base_url.clone(),
                    api_key,
                    self.retry.clone(),
                    Duration::from_millis(self.timeout_ms),
                )?))
            }
            BackendKind::Scripted { path } => Ok(Box::new(ScriptedBackend::from_file(path)?)),
        }
    }
}
