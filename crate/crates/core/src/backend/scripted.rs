//! Deterministic scripted backend for tests and offline replay.
//!
//! Two matching styles, usable together:
//!
//! - **exact**: replies keyed by the request's canonical digest, for
//!   prompts a test can reconstruct;
//! - **queue**: an ordered reply queue consumed first-in first-out, for
//!   prompts that are hard to pre-compute. Single-consumer by design:
//!   run queue-backed workloads with concurrency 1.
//!
//! Exact entries are consulted before the queue, so a fixture can pin a few
//! known prompts and let the queue carry the rest.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;

use super::request::{cache_key, ModelRequest, ModelResponse, Origin};
use super::{Backend, BackendError};

#[derive(Default)]
pub struct ScriptedBackend {
    exact: HashMap<String, String>,
    queue: Mutex<Vec<String>>,
    cursor: AtomicU64,
    calls: AtomicU64,
}

/// On-disk fixture: either a bare JSON array (shorthand for `queue`) or an
/// object with optional `queue` and `exact` sections.
#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    Queue(Vec<String>),
    Full {
        #[serde(default)]
        queue: Vec<String>,
        #[serde(default)]
        exact: Vec<ExactEntry>,
    },
}

#[derive(Deserialize)]
struct ExactEntry {
    digest: String,
    reply: String,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_queue(replies: Vec<String>) -> Self {
        ScriptedBackend { queue: Mutex::new(replies), ..Self::default() }
    }

    /// Pin a reply to the exact request that will ask for it.
    pub fn script(&mut self, request: &ModelRequest, reply: impl Into<String>) {
        self.exact.insert(cache_key(request).as_str().to_string(), reply.into());
    }

    /// Append a reply to the ordered queue.
    pub fn push_reply(&mut self, reply: impl Into<String>) {
        self.queue.lock().expect("queue lock").push(reply.into());
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| {
            BackendError::Config(format!("cannot read script file {}: {e}", path.display()))
        })?;
        let parsed: ScriptFile = serde_json::from_str(&raw).map_err(|e| {
            BackendError::Config(format!("bad script file {}: {e}", path.display()))
        })?;
        let (queue, exact) = match parsed {
            ScriptFile::Queue(q) => (q, Vec::new()),
            ScriptFile::Full { queue, exact } => (queue, exact),
        };
        Ok(ScriptedBackend {
            exact: exact.into_iter().map(|e| (e.digest, e.reply)).collect(),
            queue: Mutex::new(queue),
            cursor: AtomicU64::new(0),
            calls: AtomicU64::new(0),
        })
    }

    /// Replies still waiting in the queue.
    pub fn queue_remaining(&self) -> usize {
        let consumed = self.cursor.load(Ordering::SeqCst) as usize;
        self.queue.lock().expect("queue lock").len().saturating_sub(consumed)
    }

    fn reply_for(&self, request: &ModelRequest) -> Result<String, BackendError> {
        let digest = cache_key(request);
        if let Some(reply) = self.exact.get(digest.as_str()) {
            return Ok(reply.clone());
        }
        let queue = self.queue.lock().expect("queue lock");
        let idx = self.cursor.fetch_add(1, Ordering::SeqCst) as usize;
        match queue.get(idx) {
            Some(reply) => Ok(reply.clone()),
            None => Err(BackendError::ScriptExhausted { digest: digest.as_str().to_string() }),
        }
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        request.validate()?;
        let text = self.reply_for(request)?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let prompt_tokens: u64 =
            request.messages.iter().map(|m| m.text.split_whitespace().count() as u64).sum();
        Ok(ModelResponse {
            completion_tokens: text.split_whitespace().count() as u64,
            text,
            prompt_tokens,
            latency: Duration::ZERO,
            origin: Origin::Scripted,
        })
    }

    fn calls_made(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(text: &str) -> ModelRequest {
        ModelRequest::user_turn("scripted", 0.0, 128, text)
    }

    #[test]
    fn exact_replay_is_deterministic() {
        let mut backend = ScriptedBackend::new();
        backend.script(&request("plan"), "A → B → C\nB → A → C\nA → C → B");
        let first = backend.complete(&request("plan")).unwrap();
        let second = backend.complete(&request("plan")).unwrap();
        assert_eq!(first.text, second.text);
        assert_eq!(first.text, "A → B → C\nB → A → C\nA → C → B");
        assert_eq!(backend.calls_made(), 2);
    }

    #[test]
    fn queue_pops_in_order_then_exhausts() {
        let backend = ScriptedBackend::with_queue(vec!["one".into(), "two".into()]);
        assert_eq!(backend.complete(&request("x")).unwrap().text, "one");
        assert_eq!(backend.complete(&request("y")).unwrap().text, "two");
        let err = backend.complete(&request("z")).unwrap_err();
        assert!(matches!(err, BackendError::ScriptExhausted { .. }));
        assert_eq!(backend.calls_made(), 2);
    }

    #[test]
    fn exact_takes_priority_over_queue() {
        let mut backend = ScriptedBackend::with_queue(vec!["queued".into()]);
        backend.script(&request("pinned"), "exact");
        assert_eq!(backend.complete(&request("pinned")).unwrap().text, "exact");
        assert_eq!(backend.queue_remaining(), 1);
        assert_eq!(backend.complete(&request("other")).unwrap().text, "queued");
    }

    #[test]
    fn reply_text_is_verbatim_untrimmed() {
        let mut backend = ScriptedBackend::new();
        backend.script(&request("q"), "  padded \n");
        assert_eq!(backend.complete(&request("q")).unwrap().text, "  padded \n");
    }
}
