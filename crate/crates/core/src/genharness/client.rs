//! Completion endpoints: the backend trait and an HTTP client for
//! OpenAI-compatible `completions` / `chat/completions` routes.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

/// Environment variable holding the bearer token for the endpoint.
pub const API_KEY_ENV: &str = "PLANSHIFT_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    /// `"stop"` when the model ended on its own, `"length"` when cut off.
    pub finish_reason: Option<String>,
}

pub trait CompletionBackend: Sync {
    fn complete(&self, prompt: &str) -> Result<Completion>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApiStyle {
    /// `POST {base}/completions` with a raw `prompt`.
    Completions,
    /// `POST {base}/chat/completions` with a single user message.
    Chat,
}

impl std::str::FromStr for ApiStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "completions" => Ok(ApiStyle::Completions),
            "chat" => Ok(ApiStyle::Chat),
            other => Err(Error::InvalidParameter(format!("unknown api style '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Base URL including the version prefix, e.g. `http://localhost:8000/v1`.
    pub base_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout: Duration,
    pub retry_limit: u32,
    pub api_style: ApiStyle,
    /// First retry delay; doubles on every further attempt.
    pub backoff: Duration,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model_name: "default".into(),
            temperature: 0.0,
            max_tokens: 512,
            timeout: Duration::from_secs(120),
            retry_limit: 3,
            api_style: ApiStyle::Completions,
            backoff: Duration::from_millis(500),
        }
    }
}

impl EndpointConfig {
    pub fn url(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        match self.api_style {
            ApiStyle::Completions => format!("{base}/completions"),
            ApiStyle::Chat => format!("{base}/chat/completions"),
        }
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        match self.api_style {
            ApiStyle::Completions => json!({
                "model": self.model_name,
                "prompt": prompt,
                "temperature": self.temperature,
                "max_tokens": self.max_tokens,
            }),
            ApiStyle::Chat => json!({
                "model": self.model_name,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": self.temperature,
                "max_tokens": self.max_tokens,
            }),
        }
    }
}

/// Pulls the first choice's text out of a completion response.
pub fn extract_completion(body: &Value) -> Result<Completion> {
    let choice = body
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| Error::Format("response has no choices".into()))?;
    let text = choice
        .get("text")
        .and_then(Value::as_str)
        .or_else(|| {
            choice
                .get("message")
                .and_then(|m| m.get("content"))
                .and_then(Value::as_str)
        })
        .ok_or_else(|| Error::Format("first choice carries no text".into()))?;
    Ok(Completion {
        text: text.to_string(),
        finish_reason: choice
            .get("finish_reason")
            .and_then(Value::as_str)
            .map(str::to_string),
    })
}

#[cfg(feature = "http")]
pub use http::HttpBackend;

#[cfg(feature = "http")]
mod http {
    use super::*;

    pub struct HttpBackend {
        config: EndpointConfig,
        api_key: Option<String>,
        agent: ureq::Agent,
    }

    enum Attempt {
        Retry(String),
        Fatal(String),
    }

    impl HttpBackend {
        /// Reads the bearer token from [`API_KEY_ENV`] when set.
        pub fn new(config: EndpointConfig) -> Self {
            let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
            Self::with_api_key(config, api_key)
        }

        pub fn with_api_key(config: EndpointConfig, api_key: Option<String>) -> Self {
            let agent = ureq::Agent::config_builder()
                .timeout_global(Some(config.timeout))
                .http_status_as_error(false)
                .build()
                .into();
            Self {
                config,
                api_key,
                agent,
            }
        }

        pub fn config(&self) -> &EndpointConfig {
            &self.config
        }

        fn attempt(&self, url: &str, body: &str) -> std::result::Result<Completion, Attempt> {
            let mut req = self.agent.post(url).header("Content-Type", "application/json");
            if let Some(key) = &self.api_key {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            let mut resp = req.send(body).map_err(|e| Attempt::Retry(e.to_string()))?;
            let status = resp.status().as_u16();
            let text = resp
                .body_mut()
                .read_to_string()
                .map_err(|e| Attempt::Retry(e.to_string()))?;
            if status == 429 || status >= 500 {
                return Err(Attempt::Retry(format!("HTTP {status}: {text}")));
            }
            if status >= 400 {
                return Err(Attempt::Fatal(format!("HTTP {status}: {text}")));
            }
            let value: Value = serde_json::from_str(&text)
                .map_err(|e| Attempt::Fatal(format!("invalid JSON response: {e}")))?;
            extract_completion(&value).map_err(|e| Attempt::Fatal(e.to_string()))
        }
    }

    impl CompletionBackend for HttpBackend {
        fn complete(&self, prompt: &str) -> Result<Completion> {
            let url = self.config.url();
            let body = self.config.request_body(prompt).to_string();
            let mut delay = self.config.backoff;
            let mut attempt = 0;
            loop {
                match self.attempt(&url, &body) {
                    Ok(c) => return Ok(c),
                    Err(Attempt::Fatal(message)) => {
                        return Err(Error::Transport {
                            context: url,
                            message,
                        })
                    }
                    Err(Attempt::Retry(message)) => {
                        if attempt >= self.config.retry_limit {
                            return Err(Error::Transport {
                                context: url,
                                message: format!("{message} (after {} retries)", attempt),
                            });
                        }
                        std::thread::sleep(delay);
                        delay *= 2;
                        attempt += 1;
                    }
                }
            }
        }
    }
}
