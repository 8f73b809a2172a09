//! Chat-completion request/response types and content-addressed keys.
//!
//! A [`ModelRequest`] is the unit every backend consumes. Its canonical
//! serialization (sorted field names, compact UTF-8 JSON, no whitespace
//! outside message text) is the basis for [`CacheKey`] digests, so keys are
//! portable across processes and machines.

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::BackendError;

/// Speaker of one chat message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::System => write!(f, "system"),
            Role::User => write!(f, "user"),
            Role::Assistant => write!(f, "assistant"),
        }
    }
}

/// One turn of a chat conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

impl Message {
    pub fn system(text: impl Into<String>) -> Self {
        Message { role: Role::System, text: text.into() }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Message { role: Role::User, text: text.into() }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Message { role: Role::Assistant, text: text.into() }
    }
}

/// A complete chat-completion request.
///
/// Invariants (checked by [`ModelRequest::validate`]): `messages` is
/// non-empty, the last message is a user turn, and `temperature` is finite
/// and non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub messages: Vec<Message>,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed_hint: Option<u64>,
}

impl ModelRequest {
    /// Single user-turn request.
    pub fn user_turn(
        model_id: impl Into<String>,
        temperature: f64,
        max_tokens: u32,
        text: impl Into<String>,
    ) -> Self {
        ModelRequest {
            messages: vec![Message::user(text)],
            model_id: model_id.into(),
            temperature,
            max_tokens,
            seed_hint: None,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.messages.is_empty() {
            return Err(BackendError::InvalidRequest("messages must be non-empty".into()));
        }
        if self.messages.last().map(|m| m.role) != Some(Role::User) {
            return Err(BackendError::InvalidRequest("last message must be a user turn".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(BackendError::InvalidRequest(format!(
                "temperature must be finite and >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Canonical serialization: compact JSON with field names sorted at every
    /// level, UTF-8, LF only. Message text is embedded verbatim (JSON string
    /// escaping aside), so any byte change in content changes the result.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("request serializes");
        // serde_json's Map is BTreeMap-backed, so keys come out sorted.
        serde_json::to_string(&value).expect("value serializes")
    }
}

/// Where a response came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Live,
    Scripted,
    Cache,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Live => write!(f, "live"),
            Origin::Scripted => write!(f, "scripted"),
            Origin::Cache => write!(f, "cache"),
        }
    }
}

/// A completed model reply, text verbatim and untrimmed.
#[derive(Debug, Clone)]
pub struct ModelResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency: Duration,
    pub origin: Origin,
}

/// Content-addressed identity of a [`ModelRequest`]: lowercase hex SHA-256
/// over the canonical serialization. Equal requests produce equal digests;
/// any field change produces a different digest.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    digest: String,
}

impl CacheKey {
    pub fn as_str(&self) -> &str {
        &self.digest
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.digest)
    }
}

/// Digest of a request under the canonical serialization.
pub fn cache_key(request: &ModelRequest) -> CacheKey {
    let canonical = request.canonical_json();
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    CacheKey { digest: hex::encode(hasher.finalize()) }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_request() -> ModelRequest {
        ModelRequest::user_turn("test-model", 0.0, 256, "hello")
    }

    #[test]
    fn key_is_stable_for_equal_requests() {
        assert_eq!(cache_key(&base_request()), cache_key(&base_request()));
    }

    #[test]
    fn key_changes_with_temperature() {
        let a = base_request();
        let mut b = base_request();
        b.temperature = 0.7;
        assert_ne!(cache_key(&a), cache_key(&b));
    }

    #[test]
    fn key_changes_with_one_character() {
        let a = base_request();
        let mut b = base_request();
        b.messages[0].text = "hellp".into();
        assert_ne!(cache_key(&a), cache_key(&b));
    }

    #[test]
    fn key_is_lowercase_hex() {
        let key = cache_key(&base_request());
        assert_eq!(key.as_str().len(), 64);
        assert!(key.as_str().chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
    }

    #[test]
    fn canonical_json_sorts_fields() {
        let json = base_request().canonical_json();
        let max_tokens = json.find("\"max_tokens\"").unwrap();
        let messages = json.find("\"messages\"").unwrap();
        let model_id = json.find("\"model_id\"").unwrap();
        let seed = json.find("\"seed_hint\"").unwrap();
        let temp = json.find("\"temperature\"").unwrap();
        assert!(max_tokens < messages && messages < model_id && model_id < seed && seed < temp);
    }

    #[test]
    fn validate_rejects_bad_requests() {
        let mut r = base_request();
        r.messages.clear();
        assert!(r.validate().is_err());

        let mut r = base_request();
        r.messages.push(Message::assistant("tail"));
        assert!(r.validate().is_err());

        let mut r = base_request();
        r.temperature = f64::NAN;
        assert!(r.validate().is_err());
    }
}
