//! Client for an OpenAI-compatible chat-completions endpoint.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tokio::sync::Semaphore;

use super::{parse_response, RecognitionResult, ResponseError};
use crate::prompting::{PromptError, PromptPayload};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env_var_name: String,
    pub timeout_secs: u64,
    /// Extra attempts after the first for transport errors, 429 and 5xx.
    pub max_retries: u32,
    pub max_inflight_requests: usize,
    pub temperature: f64,
    /// Delay before the first retry; doubles per retry.
    pub retry_backoff_ms: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model_name: "gpt-4o".into(),
            api_key_env_var_name: "OPENAI_API_KEY".into(),
            timeout_secs: 60,
            max_retries: 3,
            max_inflight_requests: 4,
            temperature: 0.0,
            retry_backoff_ms: 500,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), RemoteError> {
        if self.base_url.trim().is_empty() || self.model_name.trim().is_empty() {
            return Err(RemoteError::Config(
                "base_url and model_name must be set".into(),
            ));
        }
        if self.api_key_env_var_name.trim().is_empty() {
            return Err(RemoteError::Config(
                "api_key_env_var_name must be set".into(),
            ));
        }
        if self.max_inflight_requests == 0 || self.timeout_secs == 0 {
            return Err(RemoteError::Config(
                "max_inflight_requests and timeout_secs must be >= 1".into(),
            ));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(RemoteError::Config(format!(
                "temperature {} outside 0..=2",
                self.temperature
            )));
        }
        Ok(())
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Error)]
pub enum RemoteError {
    #[error("endpoint config: {0}")]
    Config(String),
    #[error("environment variable `{0}` holding the API key is not set")]
    MissingApiKey(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("request failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint returned HTTP {status} after {attempts} attempts: {body}")]
    Status {
        status: u16,
        attempts: u32,
        body: String,
    },
    #[error("response violates the label schema: {source}; body: {body}")]
    Schema {
        #[source]
        source: ResponseError,
        body: String,
    },
    #[error("runtime: {0}")]
    Runtime(String),
}

/// Shares one HTTP client and an in-flight request limit across calls.
#[derive(Clone)]
pub struct RemoteRecognizer {
    cfg: EndpointConfig,
    api_key: String,
    client: reqwest::Client,
    permits: Arc<Semaphore>,
}

impl RemoteRecognizer {
    /// Reads the API key from the configured environment variable; fails
    /// before any network traffic if it is unset.
    pub fn new(cfg: EndpointConfig) -> Result<Self, RemoteError> {
        cfg.validate()?;
        let api_key = std::env::var(&cfg.api_key_env_var_name)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| RemoteError::MissingApiKey(cfg.api_key_env_var_name.clone()))?;
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| RemoteError::Config(e.to_string()))?;
        let permits = Arc::new(Semaphore::new(cfg.max_inflight_requests));
        Ok(Self {
            cfg,
            api_key,
            client,
            permits,
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    /// Labels every keyframe of one prompt. Frames in the result are absolute.
    pub async fn recognize(
        &self,
        payload: &PromptPayload,
    ) -> Result<RecognitionResult, RemoteError> {
        let request = payload.chat_request(&self.cfg.model_name, self.cfg.temperature)?;
        let body = self.post_with_retries(&request).await?;
        let content = message_content(&body).map_err(|source| RemoteError::Schema {
            source,
            body: body.clone(),
        })?;
        parse_response(&content, payload.keyframe_count())
            .and_then(|r| r.with_frames(&payload.keyframe_frames))
            .map_err(|source| RemoteError::Schema { source, body })
    }

    /// Runs all prompts concurrently, bounded by `max_inflight_requests`.
    pub async fn recognize_batch(
        &self,
        payloads: &[PromptPayload],
    ) -> Vec<Result<RecognitionResult, RemoteError>> {
        futures::future::join_all(payloads.iter().map(|p| self.recognize(p))).await
    }

    async fn post_with_retries(&self, request: &Value) -> Result<String, RemoteError> {
        let attempts = self.cfg.max_retries + 1;
        let mut last = None;
        for attempt in 1..=attempts {
            if attempt > 1 {
                let exp = (attempt - 2).min(16);
                let delay = self
                    .cfg
                    .retry_backoff_ms
                    .saturating_mul(1 << exp)
                    .min(30_000);
                tokio::time::sleep(Duration::from_millis(delay)).await;
            }
            let outcome = {
                let _permit = self
                    .permits
                    .acquire()
                    .await
                    .map_err(|e| RemoteError::Runtime(e.to_string()))?;
                self.post_once(request).await
            };
            match outcome {
                Ok((status, body)) if (200..300).contains(&status) => return Ok(body),
                Ok((status, body)) if status == 429 || status >= 500 => {
                    last = Some(Err((status, body)));
                }
                Ok((status, body)) => {
                    return Err(RemoteError::Status {
                        status,
                        attempts: attempt,
                        body,
                    })
                }
                Err(message) => last = Some(Ok(message)),
            }
        }
        Err(match last.expect("at least one attempt") {
            Ok(message) => RemoteError::Transport { attempts, message },
            Err((status, body)) => RemoteError::Status {
                status,
                attempts,
                body,
            },
        })
    }

    async fn post_once(&self, request: &Value) -> Result<(u16, String), String> {
        let response = self
            .client
            .post(self.cfg.endpoint())
            .bearer_auth(&self.api_key)
            .json(request)
            .send()
            .await
            .map_err(|e| e.to_string())?;
        let status = response.status().as_u16();
        let body = response.text().await.map_err(|e| e.to_string())?;
        Ok((status, body))
    }
}

/// Extracts `choices[0].message.content` from a chat-completions body.
fn message_content(body: &str) -> Result<String, ResponseError> {
    let v: Value =
        serde_json::from_str(body).map_err(|e| ResponseError::Malformed(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| ResponseError::Malformed("missing choices[0].message.content".into()))
}

/// Blocking convenience wrapper around [`RemoteRecognizer::recognize`].
pub fn recognize_remote(
    payload: &PromptPayload,
    cfg: &EndpointConfig,
) -> Result<RecognitionResult, RemoteError> {
    let recognizer = RemoteRecognizer::new(cfg.clone())?;
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| RemoteError::Runtime(e.to_string()))?;
    runtime.block_on(recognizer.recognize(payload))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_key_fails_before_network() {
        let cfg = EndpointConfig {
            base_url: "http://127.0.0.1:9".into(),
            api_key_env_var_name: "ACSR_TEST_KEY_THAT_IS_NEVER_SET".into(),
            ..EndpointConfig::default()
        };
        assert!(matches!(
            RemoteRecognizer::new(cfg),
            Err(RemoteError::MissingApiKey(v)) if v == "ACSR_TEST_KEY_THAT_IS_NEVER_SET"
        ));
    }

    #[test]
    fn config_validation() {
        let cfg = EndpointConfig {
            max_inflight_requests: 0,
            ..EndpointConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(RemoteError::Config(_))));
        assert_eq!(
            EndpointConfig {
                base_url: "http://h/v1/".into(),
                ..EndpointConfig::default()
            }
            .endpoint(),
            "http://h/v1/chat/completions"
        );
    }

    #[test]
    fn extracts_message_content() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"[1]"}}]}"#;
        assert_eq!(message_content(body).unwrap(), "[1]");
        assert!(message_content("{}").is_err());
    }
}
