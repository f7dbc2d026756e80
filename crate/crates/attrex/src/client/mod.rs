//! Chat-completion backends.
//!
//! Two backends exist behind one call surface: an HTTP backend speaking the
//! OpenAI-compatible chat-completion wire format, and a scripted stub for
//! reproducible offline runs. Both report token usage; responses are returned
//! verbatim (trimming is the parser's job) so cached raw text stays
//! re-scorable under new parsers.

mod cache;
mod http;
mod stub;

pub use cache::cached_complete;
pub use http::HttpBackend;
pub use stub::{approx_token_count, StubBackend};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chat::Message;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("credential environment variable {0} is not set")]
    CredentialMissing(String),
    #[error("backend request failed after {attempts} attempt(s){}: {message}",
            status.map(|s| format!(" (last status {s})")).unwrap_or_default())]
    Transport {
        attempts: u32,
        status: Option<u16>,
        message: String,
    },
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("unscripted prompt {prompt_hash}")]
    UnscriptedPrompt { prompt_hash: String },
    #[error("failed to read stub script {path}: {message}")]
    Script { path: PathBuf, message: String },
    #[error("cache failure at {path}: {message}")]
    Cache { path: PathBuf, message: String },
}

/// One completion call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub temperature: f64,
    pub messages: Vec<Message>,
    pub max_output_tokens: Option<u32>,
}

impl CompletionRequest {
    pub fn new(model_id: impl Into<String>, temperature: f64, messages: Vec<Message>) -> Self {
        CompletionRequest {
            model_id: model_id.into(),
            temperature,
            messages,
            max_output_tokens: None,
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if self.messages.is_empty() {
            return Err(ClientError::InvalidRequest("no messages".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(ClientError::InvalidRequest(format!(
                "temperature {} is negative or NaN",
                self.temperature
            )));
        }
        Ok(())
    }

    /// Identifies the prompt (messages only) for stub scripts and archives.
    pub fn prompt_hash(&self) -> String {
        hash_messages(&self.messages)
    }

    /// Cache key over everything that changes the completion: model,
    /// temperature and messages.
    pub fn cache_key(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.model_id.as_bytes());
        h.update([0x1f]);
        h.update(format!("{}", self.temperature).as_bytes());
        h.update([0x1f]);
        if let Some(max) = self.max_output_tokens {
            h.update(max.to_le_bytes());
        }
        h.update([0x1f]);
        for m in &self.messages {
            h.update(m.role.as_str().as_bytes());
            h.update([0x1f]);
            h.update(m.text.as_bytes());
            h.update([0x1e]);
        }
        hex::encode(h.finalize())
    }
}

/// Stable hash of a message sequence.
pub fn hash_messages(messages: &[Message]) -> String {
    let mut h = Sha256::new();
    for m in messages {
        h.update(m.role.as_str().as_bytes());
        h.update([0x1f]);
        h.update(m.text.as_bytes());
        h.update([0x1e]);
    }
    hex::encode(h.finalize())
}

/// The backend's answer plus usage accounting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
    pub from_cache: bool,
    pub latency_ms: u64,
    /// Set when the wire format signals output truncation.
    #[serde(default)]
    pub truncated: bool,
}

/// Transport retry settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            backoff_base_ms: 250,
        }
    }
}

impl RetryPolicy {
    /// Exponential backoff before the given retry (1-based attempt just failed).
    pub fn backoff_ms(&self, attempt: u32) -> u64 {
        self.backoff_base_ms
            .saturating_mul(1u64 << (attempt.min(16) - 1))
    }
}

/// A ready-to-call completion backend.
#[derive(Debug)]
pub enum Backend {
    Stub(StubBackend),
    Http(HttpBackend),
}

impl Backend {
    /// Executes one completion, validating the request first.
    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ClientError> {
        request.validate()?;
        match self {
            Backend::Stub(stub) => stub.complete(request),
            Backend::Http(http) => http.complete(request),
        }
    }

    /// Number of completions actually executed (cache hits do not count).
    pub fn call_count(&self) -> u64 {
        match self {
            Backend::Stub(stub) => stub.call_count(),
            Backend::Http(http) => http.call_count(),
        }
    }
}
