//! OpenAI-compatible HTTP backend.
//!
//! Sends `{model, messages, temperature}` to a chat-completions endpoint and
//! reads `choices[0].message.content` plus `usage`. The bearer credential is
//! read from a named environment variable at call time. Transient failures
//! (transport errors, 429, 5xx) are retried with exponential backoff.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use serde::Deserialize;

use super::{ClientError, CompletionRequest, CompletionResponse, RetryPolicy};

#[derive(Debug)]
pub struct HttpBackend {
    endpoint: String,
    credential_env: String,
    retry: RetryPolicy,
    calls: AtomicU64,
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Debug, Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Debug, Deserialize)]
struct WireMessage {
    content: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl HttpBackend {
    pub fn new(
        endpoint: impl Into<String>,
        credential_env: impl Into<String>,
        retry: RetryPolicy,
    ) -> HttpBackend {
        HttpBackend {
            endpoint: endpoint.into(),
            credential_env: credential_env.into(),
            retry,
            calls: AtomicU64::new(0),
        }
    }

    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub(super) fn complete(
        &self,
        request: &CompletionRequest,
    ) -> Result<CompletionResponse, ClientError> {
        let credential = std::env::var(&self.credential_env)
            .map_err(|_| ClientError::CredentialMissing(self.credential_env.clone()))?;
        let mut body = serde_json::json!({
            "model": request.model_id,
            "messages": request.messages,
            "temperature": request.temperature,
        });
        if let Some(max) = request.max_output_tokens {
            body["max_tokens"] = serde_json::json!(max);
        }
        let max_attempts = self.retry.max_attempts.max(1);
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            self.calls.fetch_add(1, Ordering::Relaxed);
            let started = Instant::now();
            let result = ureq::post(&self.endpoint)
                .header("authorization", &format!("Bearer {credential}"))
                .send_json(&body);
            match result {
                Ok(mut response) => {
                    let wire: WireResponse = response.body_mut().read_json().map_err(|e| {
                        ClientError::MalformedResponse(format!("invalid JSON body: {e}"))
                    })?;
                    return parse_wire(wire, started.elapsed().as_millis() as u64);
                }
                Err(err) => {
                    let status = match &err {
                        ureq::Error::StatusCode(code) => Some(*code),
                        _ => None,
                    };
                    let retryable = match status {
                        Some(code) => code == 429 || code >= 500,
                        None => true,
                    };
                    if retryable && attempt < max_attempts {
                        std::thread::sleep(std::time::Duration::from_millis(
                            self.retry.backoff_ms(attempt),
                        ));
                        continue;
                    }
                    return Err(ClientError::Transport {
                        attempts: attempt,
                        status,
                        message: err.to_string(),
                    });
                }
            }
        }
    }
}

fn parse_wire(wire: WireResponse, latency_ms: u64) -> Result<CompletionResponse, ClientError> {
    let choice = wire
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| ClientError::MalformedResponse("response has no choices".into()))?;
    let text = choice
        .message
        .content
        .ok_or_else(|| ClientError::MalformedResponse("choice has no message content".into()))?;
    let usage = wire.usage.unwrap_or_default();
    Ok(CompletionResponse {
        text,
        prompt_tokens: usage.prompt_tokens,
        completion_tokens: usage.completion_tokens,
        total_tokens: usage.prompt_tokens + usage.completion_tokens,
        from_cache: false,
        latency_ms,
        truncated: choice.finish_reason.as_deref() == Some("length"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chat::Message;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// One-shot test server answering scripted (status, body) pairs in order.
    fn spawn_server(responses: Vec<(u16, String)>) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (mut stream, _) = match listener.accept() {
                    Ok(s) => s,
                    Err(_) => return,
                };
                let mut buf = [0u8; 16384];
                let _ = stream.read(&mut buf);
                let reason = if status == 200 { "OK" } else { "Error" };
                let response = format!(
                    "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(response.as_bytes());
            }
        });
        format!("http://{addr}/v1/chat/completions")
    }

    fn ok_body(content: &str, prompt: u64, completion: u64) -> String {
        serde_json::json!({
            "choices": [{"message": {"content": content}, "finish_reason": "stop"}],
            "usage": {"prompt_tokens": prompt, "completion_tokens": completion,
                      "total_tokens": prompt + completion}
        })
        .to_string()
    }

    fn request() -> CompletionRequest {
        CompletionRequest::new("test-model", 0.0, vec![Message::user("hello")])
    }

    fn fast_retry() -> RetryPolicy {
        RetryPolicy {
            max_attempts: 3,
            backoff_base_ms: 1,
        }
    }

    #[test]
    fn happy_path_reports_usage_additively() {
        let url = spawn_server(vec![(200, ok_body("10 MP", 98, 23))]);
        std::env::set_var("ATTREX_TEST_KEY_HAPPY", "secret");
        let backend = HttpBackend::new(url, "ATTREX_TEST_KEY_HAPPY", fast_retry());
        let resp = backend.complete(&request()).unwrap();
        assert_eq!(resp.text, "10 MP");
        assert_eq!(resp.prompt_tokens, 98);
        assert_eq!(resp.completion_tokens, 23);
        assert_eq!(resp.total_tokens, 121);
        assert!(!resp.truncated);
    }

    #[test]
    fn transient_failures_are_retried() {
        let url = spawn_server(vec![(500, String::new()), (200, ok_body("ok", 1, 1))]);
        std::env::set_var("ATTREX_TEST_KEY_RETRY", "secret");
        let backend = HttpBackend::new(url, "ATTREX_TEST_KEY_RETRY", fast_retry());
        let resp = backend.complete(&request()).unwrap();
        assert_eq!(resp.text, "ok");
        assert_eq!(backend.call_count(), 2);
    }

    #[test]
    fn exhausted_retries_carry_the_final_status() {
        let url = spawn_server(vec![
            (500, String::new()),
            (500, String::new()),
            (503, String::new()),
        ]);
        std::env::set_var("ATTREX_TEST_KEY_FAIL", "secret");
        let backend = HttpBackend::new(url, "ATTREX_TEST_KEY_FAIL", fast_retry());
        match backend.complete(&request()).unwrap_err() {
            ClientError::Transport {
                attempts, status, ..
            } => {
                assert_eq!(attempts, 3);
                assert_eq!(status, Some(503));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn client_errors_fail_fast() {
        let url = spawn_server(vec![(400, String::new())]);
        std::env::set_var("ATTREX_TEST_KEY_400", "secret");
        let backend = HttpBackend::new(url, "ATTREX_TEST_KEY_400", fast_retry());
        match backend.complete(&request()).unwrap_err() {
            ClientError::Transport {
                attempts, status, ..
            } => {
                assert_eq!(attempts, 1);
                assert_eq!(status, Some(400));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_credential_is_reported() {
        let backend = HttpBackend::new(
            "http://127.0.0.1:1/unused",
            "ATTREX_TEST_KEY_UNSET",
            fast_retry(),
        );
        assert!(matches!(
            backend.complete(&request()).unwrap_err(),
            ClientError::CredentialMissing(_)
        ));
    }

    #[test]
    fn truncation_flag_follows_finish_reason() {
        let body = serde_json::json!({
            "choices": [{"message": {"content": "partial"}, "finish_reason": "length"}],
            "usage": {"prompt_tokens": 5, "completion_tokens": 5, "total_tokens": 10}
        })
        .to_string();
        let url = spawn_server(vec![(200, body)]);
        std::env::set_var("ATTREX_TEST_KEY_TRUNC", "secret");
        let backend = HttpBackend::new(url, "ATTREX_TEST_KEY_TRUNC", fast_retry());
        assert!(backend.complete(&request()).unwrap().truncated);
    }
}
