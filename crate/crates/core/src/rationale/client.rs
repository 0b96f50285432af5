use std::future::Future;
use std::sync::Arc;

use serde_json::Value;
use tokio::sync::Semaphore;

use super::LvlmEndpointConfig;
use crate::{Error, Result};

/// First completion of one request and how many HTTP attempts it took.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub attempts: usize,
}

/// Anything that turns a chat-completion body into completion text.
pub trait LvlmClient: Send + Sync {
    fn complete(&self, request: &Value) -> impl Future<Output = Result<Completion>> + Send;

    /// Identifies the model in cache keys.
    fn model_name(&self) -> &str;
}

/// Client for an HTTP chat-completion endpoint.
///
/// Each attempt holds one permit of a semaphore sized `max_concurrency`, so no
/// more than that many requests are in flight across clones of the client.
#[derive(Clone, Debug)]
pub struct HttpLvlmClient {
    http: reqwest::Client,
    endpoint: LvlmEndpointConfig,
    permits: Arc<Semaphore>,
    api_key: Option<String>,
}

enum Attempt {
    Done(Completion),
    Retry(String),
    Fatal(Error),
}

impl HttpLvlmClient {
    pub fn new(endpoint: LvlmEndpointConfig) -> Result<Self> {
        endpoint.validate()?;
        let api_key = match &endpoint.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::Config(format!("environment variable `{var}` holding the API key is not set"))
            })?),
            None => None,
        };
        let http = reqwest::Client::builder()
            .timeout(endpoint.timeout())
            .build()
            .map_err(|e| Error::Config(format!("cannot build HTTP client: {e}")))?;
        Ok(Self {
            http,
            permits: Arc::new(Semaphore::new(endpoint.max_concurrency)),
            endpoint,
            api_key,
        })
    }

    pub fn endpoint(&self) -> &LvlmEndpointConfig {
        &self.endpoint
    }

    async fn attempt(&self, request: &Value, attempts: usize) -> Attempt {
        let _permit = match self.permits.acquire().await {
            Ok(p) => p,
            Err(_) => return Attempt::Fatal(Error::Protocol("client is shut down".into())),
        };
        let mut builder = self.http.post(&self.endpoint.base_url).json(request);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = match builder.send().await {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(format!("attempt {attempts}: {e}")),
        };
        let status = response.status();
        let body = match response.text().await {
            Ok(b) => b,
            Err(e) => return Attempt::Retry(format!("attempt {attempts}: reading body: {e}")),
        };
        if status.is_server_error() || status.as_u16() == 429 {
            return Attempt::Retry(format!("attempt {attempts}: HTTP {status}"));
        }
        if !status.is_success() {
            return Attempt::Fatal(Error::Protocol(format!(
                "HTTP {status}: {}",
                body.chars().take(300).collect::<String>()
            )));
        }
        match extract_text(&body, &self.endpoint.response_path) {
            Ok(text) => Attempt::Done(Completion { text, attempts }),
            Err(e) => Attempt::Fatal(e),
        }
    }
}

impl LvlmClient for HttpLvlmClient {
    async fn complete(&self, request: &Value) -> Result<Completion> {
        let mut log = Vec::new();
        for attempt in 1..=self.endpoint.max_retries + 1 {
            match self.attempt(request, attempt).await {
                Attempt::Done(c) => return Ok(c),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(msg) => {
                    log.push(msg);
                    if attempt <= self.endpoint.max_retries {
                        tokio::time::sleep(self.endpoint.backoff(attempt - 1)).await;
                    }
                }
            }
        }
        Err(Error::Transport { attempts: log })
    }

    fn model_name(&self) -> &str {
        &self.endpoint.model_name
    }
}

/// Completion text at `pointer` in a JSON body. Arrays of content parts are
/// joined by their `text` fields.
pub fn extract_text(body: &str, pointer: &str) -> Result<String> {
    let value: Value = serde_json::from_str(body).map_err(|e| {
        Error::Protocol(format!(
            "response is not JSON ({e}): {}",
            body.chars().take(200).collect::<String>()
        ))
    })?;
    let node = value
        .pointer(pointer)
        .ok_or_else(|| Error::Protocol(format!("response has no value at `{pointer}`")))?;
    match node {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => {
            let texts: Vec<&str> = parts.iter().filter_map(|p| p["text"].as_str()).collect();
            if texts.is_empty() {
                Err(Error::Protocol(format!("no text parts at `{pointer}`")))
            } else {
                Ok(texts.join(""))
            }
        }
        other => Err(Error::Protocol(format!("value at `{pointer}` is not text: {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_chat_completion_text() {
        let body = r#"{"choices":[{"message":{"content":"- **Label**: [1]"}}]}"#;
        assert_eq!(extract_text(body, "/choices/0/message/content").unwrap(), "- **Label**: [1]");
        let parts = r#"{"content":[{"type":"text","text":"a"},{"type":"text","text":"b"}]}"#;
        assert_eq!(extract_text(parts, "/content").unwrap(), "ab");
    }

    #[test]
    fn non_json_is_protocol_error() {
        assert!(matches!(extract_text("<html>", "/x"), Err(Error::Protocol(_))));
        assert!(matches!(extract_text("{}", "/x"), Err(Error::Protocol(_))));
        assert!(matches!(extract_text(r#"{"x":3}"#, "/x"), Err(Error::Protocol(_))));
    }

    #[test]
    fn missing_key_variable_is_config_error() {
        let endpoint = LvlmEndpointConfig {
            api_key_env: Some("MIDRE_TEST_UNSET_KEY_VARIABLE".into()),
            ..Default::default()
        };
        assert!(matches!(HttpLvlmClient::new(endpoint), Err(Error::Config(_))));
    }
}
