//! Blocking client for any `/chat/completions`-compatible endpoint.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tracing::warn;

use super::{ChatModel, ChatReply, ChatRequest, LlmError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenAiCompatConfig {
    /// Base URL, e.g. `http://localhost:8000/v1`.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_attempts() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

fn default_timeout_secs() -> u64 {
    60
}

pub struct OpenAiCompatModel {
    config: OpenAiCompatConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl OpenAiCompatModel {
    pub fn new(config: OpenAiCompatConfig) -> Result<Self, LlmError> {
        let api_key = config
            .api_key_env
            .as_deref()
            .and_then(|var| std::env::var(var).ok());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Unavailable(e.to_string()))?;
        Ok(Self { config, api_key, client })
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'))
    }

    fn body(&self, request: &ChatRequest) -> Value {
        json!({
            "model": self.config.model,
            "temperature": request.temperature,
            "messages": request.messages,
        })
    }

    fn attempt(&self, body: &Value) -> Result<ChatReply, LlmError> {
        let mut req = self.client.post(self.url()).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| LlmError::Unavailable(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| LlmError::Unavailable(e.to_string()))?;
        if !status.is_success() {
            return Err(LlmError::Http { status: status.as_u16(), body: text });
        }
        parse_completion(&text)
    }
}

fn retryable(err: &LlmError) -> bool {
    match err {
        LlmError::Unavailable(_) => true,
        LlmError::Http { status, .. } => *status == 429 || *status >= 500,
        LlmError::Malformed(_) | LlmError::Config(_) => false,
    }
}

/// Extracts the first choice. A non-null `refusal` field or a
/// `content_filter` finish reason marks the reply as a refusal.
pub(crate) fn parse_completion(body: &str) -> Result<ChatReply, LlmError> {
    let v: Value = serde_json::from_str(body).map_err(|e| LlmError::Malformed(e.to_string()))?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| LlmError::Malformed("no choices".into()))?;
    let message = choice
        .get("message")
        .ok_or_else(|| LlmError::Malformed("choice without message".into()))?;
    let content = message
        .get("content")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let refusal_field = message.get("refusal").map(|r| !r.is_null()).unwrap_or(false);
    let filtered = choice.get("finish_reason").and_then(Value::as_str) == Some("content_filter");
    Ok(ChatReply { content, refusal: refusal_field || filtered })
}

impl ChatModel for OpenAiCompatModel {
    fn complete(&self, request: &ChatRequest) -> Result<ChatReply, LlmError> {
        let body = self.body(request);
        let attempts = self.config.max_attempts.max(1);
        let mut last = None;
        for attempt in 0..attempts {
            match self.attempt(&body) {
                Ok(reply) => return Ok(reply),
                Err(e) if retryable(&e) && attempt + 1 < attempts => {
                    let wait = self.config.backoff_ms << attempt;
                    warn!(attempt, wait_ms = wait, error = %e, "chat completion failed, retrying");
                    std::thread::sleep(Duration::from_millis(wait));
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.unwrap_or_else(|| LlmError::Unavailable("no attempts made".into())))
    }

    fn name(&self) -> &str {
        &self.config.model
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ChatTurn, Purpose};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};

    #[test]
    fn parses_plain_and_refusal_choices() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"hey"},"finish_reason":"stop"}]}"#;
        assert_eq!(parse_completion(ok).unwrap(), ChatReply::text("hey"));
        let refused = r#"{"choices":[{"message":{"content":null,"refusal":"no"},"finish_reason":"stop"}]}"#;
        assert!(parse_completion(refused).unwrap().refusal);
        let filtered = r#"{"choices":[{"message":{"content":""},"finish_reason":"content_filter"}]}"#;
        assert!(parse_completion(filtered).unwrap().refusal);
        assert!(matches!(parse_completion("{}"), Err(LlmError::Malformed(_))));
    }

    /// Serves the given (status, body) pairs in order, one per connection.
    fn serve(responses: Vec<(u16, &'static str)>) -> (String, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let seen = Arc::new(Mutex::new(Vec::new()));
        let seen_srv = seen.clone();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                let mut auth = String::new();
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let lower = line.to_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if lower.starts_with("authorization:") {
                        auth = line.trim().to_string();
                    }
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                seen_srv
                    .lock()
                    .unwrap()
                    .push(format!("{auth}|{}", String::from_utf8(buf).unwrap()));
                let resp = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(resp.as_bytes()).unwrap();
            }
        });
        (format!("http://{addr}/v1"), seen)
    }

    #[test]
    fn retries_server_errors_then_succeeds() {
        let ok = r#"{"choices":[{"message":{"content":"hello"},"finish_reason":"stop"}]}"#;
        let (endpoint, seen) = serve(vec![(503, "busy"), (429, "slow down"), (200, ok)]);
        std::env::set_var("BAITLINE_TEST_KEY", "k123");
        let model = OpenAiCompatModel::new(OpenAiCompatConfig {
            endpoint,
            model: "test-model".into(),
            api_key_env: Some("BAITLINE_TEST_KEY".into()),
            max_attempts: 3,
            backoff_ms: 1,
            timeout_secs: 5,
        })
        .unwrap();
        let req = ChatRequest::new(Purpose::Draft, vec![ChatTurn::system("s"), ChatTurn::user("u")]);
        assert_eq!(model.complete(&req).unwrap().content, "hello");
        let seen = seen.lock().unwrap();
        assert_eq!(seen.len(), 3);
        assert!(seen[2].starts_with("authorization: Bearer k123") || seen[2].starts_with("Authorization: Bearer k123"));
        assert!(seen[2].contains("\"model\":\"test-model\""));
        assert!(!seen[2].contains("purpose"));
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (endpoint, seen) = serve(vec![(400, "bad")]);
        let model = OpenAiCompatModel::new(OpenAiCompatConfig {
            endpoint,
            model: "m".into(),
            api_key_env: None,
            max_attempts: 3,
            backoff_ms: 1,
            timeout_secs: 5,
        })
        .unwrap();
        let req = ChatRequest::new(Purpose::Draft, vec![ChatTurn::user("u")]);
        assert_eq!(
            model.complete(&req),
            Err(LlmError::Http { status: 400, body: "bad".into() })
        );
        assert_eq!(seen.lock().unwrap().len(), 1);
    }
}
