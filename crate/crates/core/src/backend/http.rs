//! Wire client for chat-completions endpoints.
//!
//! Speaks the common JSON shape: POST `{model, messages[{role,content}],
//! temperature, max_tokens}`, read `choices[0].message.content` back.
//! Transport-level failures (connect/timeout, HTTP 5xx, 429) are retried
//! with exponential backoff; content-shaped problems are surfaced
//! immediately so a flaky network never masks a malformed reply.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::request::{ModelRequest, ModelResponse, Origin};
use super::{Backend, BackendError};

/// Retry schedule for transport failures: `attempts` tries total, sleeping
/// `base_backoff * 2^i` between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, base_backoff_ms: 500 }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.base_backoff_ms.saturating_mul(1u64 << attempt.min(16)))
    }
}

pub struct HttpBackend {
    url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
    calls: AtomicU64,
}

enum AttemptError {
    Transport(String),
    Fatal(BackendError),
}

impl HttpBackend {
    pub fn new(
        url: String,
        api_key: Option<String>,
        retry: RetryPolicy,
        timeout: Duration,
    ) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Config(format!("http client: {e}")))?;
        Ok(HttpBackend { url, api_key, retry, client, calls: AtomicU64::new(0) })
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<(String, u64, u64), AttemptError> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let response = req.send().map_err(|e| AttemptError::Transport(e.to_string()))?;
        let status = response.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(AttemptError::Transport(format!("HTTP {status}")));
        }
        if !status.is_success() {
            // Client errors will not improve on retry.
            return Err(AttemptError::Fatal(BackendError::Transport {
                message: format!("HTTP {status}"),
                attempts: 1,
            }));
        }
        let payload: serde_json::Value = response
            .json()
            .map_err(|e| AttemptError::Fatal(BackendError::BadReply(format!("undecodable body: {e}"))))?;
        let text = payload
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .ok_or_else(|| {
                AttemptError::Fatal(BackendError::BadReply(
                    "missing choices[0].message.content".into(),
                ))
            })?
            .to_string();
        let prompt_tokens = payload.pointer("/usage/prompt_tokens").and_then(|v| v.as_u64()).unwrap_or(0);
        let completion_tokens =
            payload.pointer("/usage/completion_tokens").and_then(|v| v.as_u64()).unwrap_or(0);
        Ok((text, prompt_tokens, completion_tokens))
    }
}

impl Backend for HttpBackend {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        request.validate()?;
        let body = json!({
            "model": request.model_id,
            "messages": request.messages.iter().map(|m| json!({
                "role": m.role.to_string(),
                "content": m.text,
            })).collect::<Vec<_>>(),
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });

        self.calls.fetch_add(1, Ordering::SeqCst);
        let started = Instant::now();
        let mut last_transport = String::new();
        for attempt in 0..self.retry.attempts {
            if attempt > 0 {
                std::thread::sleep(self.retry.backoff(attempt - 1));
            }
            match self.attempt(&body) {
                Ok((text, prompt_tokens, completion_tokens)) => {
                    return Ok(ModelResponse {
                        text,
                        prompt_tokens,
                        completion_tokens,
                        latency: started.elapsed(),
                        origin: Origin::Live,
                    });
                }
                Err(AttemptError::Transport(message)) => last_transport = message,
                Err(AttemptError::Fatal(err)) => return Err(err),
            }
        }
        Err(BackendError::Transport { message: last_transport, attempts: self.retry.attempts })
    }

    fn calls_made(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}
