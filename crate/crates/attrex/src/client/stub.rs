//! Deterministic scripted backend.
//!
//! The script maps a prompt — by message hash or by exact prompt text — to a
//! response string. Token counts come from a deterministic approximation
//! (whitespace chunks, split every four characters); they are stable for
//! tests, not billing-accurate.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::chat::prompt_text;

use super::{ClientError, CompletionRequest, CompletionResponse};

/// Approximate token count: each whitespace-delimited chunk contributes one
/// token per started group of four characters.
pub fn approx_token_count(text: &str) -> u64 {
    text.split_whitespace()
        .map(|chunk| chunk.chars().count().div_ceil(4) as u64)
        .sum()
}

#[derive(Debug, Default)]
pub struct StubBackend {
    script: HashMap<String, String>,
    calls: AtomicU64,
}

impl StubBackend {
    pub fn new(script: HashMap<String, String>) -> StubBackend {
        StubBackend {
            script,
            calls: AtomicU64::new(0),
        }
    }

    pub fn empty() -> StubBackend {
        StubBackend::new(HashMap::new())
    }

    /// Loads a JSON object file mapping prompt hash (or exact prompt text) to
    /// response text.
    pub fn from_file(path: &Path) -> Result<StubBackend, ClientError> {
        let text = std::fs::read_to_string(path).map_err(|e| ClientError::Script {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let script: HashMap<String, String> =
            serde_json::from_str(&text).map_err(|e| ClientError::Script {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        Ok(StubBackend::new(script))
    }

    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub(super) fn complete(
        &self,
        request: &CompletionRequest,
    ) -> Result<CompletionResponse, ClientError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let hash = request.prompt_hash();
        let text = self
            .script
            .get(&hash)
            .or_else(|| self.script.get(&prompt_text(&request.messages)))
            .ok_or(ClientError::UnscriptedPrompt {
                prompt_hash: hash.clone(),
            })?;
        let prompt_tokens: u64 = request
            .messages
            .iter()
            .map(|m| approx_token_count(&m.text))
            .sum();
        let completion_tokens = approx_token_count(text);
        Ok(CompletionResponse {
            text: text.clone(),
            prompt_tokens,
            completion_tokens,
            total_tokens: prompt_tokens + completion_tokens,
            from_cache: false,
            latency_ms: 0,
            truncated: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chat::Message;
    use crate::client::Backend;

    fn request(text: &str) -> CompletionRequest {
        CompletionRequest::new("stub-model", 0.0, vec![Message::user(text)])
    }

    #[test]
    fn scripted_prompts_resolve_by_hash() {
        let req = request("What is the Resolution?");
        let mut script = HashMap::new();
        script.insert(req.prompt_hash(), "10 MP".to_string());
        let backend = Backend::Stub(StubBackend::new(script));
        let resp = backend.complete(&req).unwrap();
        assert_eq!(resp.text, "10 MP");
        assert!(!resp.from_cache);
        assert_eq!(
            resp.total_tokens,
            resp.prompt_tokens + resp.completion_tokens
        );
    }

    #[test]
    fn scripted_prompts_resolve_by_exact_text() {
        let req = request("hello there");
        let mut script = HashMap::new();
        script.insert("hello there".to_string(), "hi".to_string());
        let backend = StubBackend::new(script);
        assert_eq!(backend.complete(&req).unwrap().text, "hi");
    }

    #[test]
    fn unscripted_prompts_name_their_hash() {
        let req = request("mystery");
        let backend = StubBackend::empty();
        match backend.complete(&req).unwrap_err() {
            ClientError::UnscriptedPrompt { prompt_hash } => {
                assert_eq!(prompt_hash, req.prompt_hash());
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn stub_is_a_pure_function_of_script_and_request() {
        let req = request("same");
        let mut script = HashMap::new();
        script.insert(req.prompt_hash(), "answer".to_string());
        let backend = StubBackend::new(script);
        let a = backend.complete(&req).unwrap();
        let b = backend.complete(&req).unwrap();
        assert_eq!(a, b);
        assert_eq!(backend.call_count(), 2);
    }

    #[test]
    fn token_approximation_counts_four_char_chunks() {
        assert_eq!(approx_token_count(""), 0);
        assert_eq!(approx_token_count("abcd"), 1);
        assert_eq!(approx_token_count("abcde"), 2);
        assert_eq!(approx_token_count("a b"), 2);
        assert_eq!(approx_token_count("10 MP"), 2);
        assert_eq!(approx_token_count("héllo"), 2);
        assert_eq!(approx_token_count("  spaced   out  "), 3);
    }
}
