//! OpenAI-compatible completions/embeddings client.

use std::time::Duration;

use log::warn;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::json;

use super::{CompletionRequest, LlmBackend, Semaphore};
use crate::error::{Error, Result};
use crate::retrieval::EmbeddingVector;

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "EXPCOPILOT_API_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    /// Delay before the first retry; doubles on each further retry.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(retry)
    }
}

#[derive(Debug, Clone)]
pub struct HttpSettings {
    pub endpoint: String,
    pub model: String,
    pub embed_model: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
}

impl HttpSettings {
    pub fn new(endpoint: &str, model: &str, embed_model: &str) -> Self {
        HttpSettings {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            model: model.to_string(),
            embed_model: embed_model.to_string(),
            timeout: Duration::from_secs(60),
            retry: RetryPolicy::default(),
            max_in_flight: 4,
        }
    }
}

pub struct HttpBackend {
    settings: HttpSettings,
    api_key: String,
    client: Client,
    in_flight: Semaphore,
}

#[derive(Deserialize)]
struct CompletionChoice {
    text: String,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

impl HttpBackend {
    /// Reads the API key from [`API_KEY_ENV`].
    pub fn from_env(settings: HttpSettings) -> Result<Self> {
        let key = std::env::var(API_KEY_ENV)
            .map_err(|_| Error::Config(format!("{API_KEY_ENV} is not set")))?;
        Self::with_api_key(settings, key)
    }

    pub fn with_api_key(settings: HttpSettings, api_key: String) -> Result<Self> {
        if api_key.trim().is_empty() {
            return Err(Error::Config("empty API key".into()));
        }
        let client = Client::builder()
            .timeout(settings.timeout)
            .build()
            .map_err(|e| Error::Backend(format!("cannot build HTTP client: {e}")))?;
        let in_flight = Semaphore::new(settings.max_in_flight);
        Ok(HttpBackend {
            settings,
            api_key,
            client,
            in_flight,
        })
    }

    pub fn settings(&self) -> &HttpSettings {
        &self.settings
    }

    fn post(&self, route: &str, body: &serde_json::Value) -> Result<String> {
        let url = format!("{}/{}", self.settings.endpoint, route);
        let _permit = self.in_flight.acquire();
        let mut attempt = 0;
        loop {
            let outcome = self
                .client
                .post(&url)
                .bearer_auth(&self.api_key)
                .json(body)
                .send();
            let retryable_detail = match outcome {
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp
                        .text()
                        .map_err(|e| Error::Backend(format!("{url}: reading body: {e}")))?;
                    if status.is_success() {
                        return Ok(text);
                    }
                    let detail = format!("{url}: HTTP {status}: {}", snippet(&text));
                    if !is_retryable(status) {
                        return Err(Error::Backend(detail));
                    }
                    detail
                }
                Err(e) if e.is_timeout() => format!("{url}: timeout: {e}"),
                Err(e) => return Err(Error::Backend(format!("{url}: {e}"))),
            };
            if attempt >= self.settings.retry.max_retries {
                return Err(Error::Backend(format!(
                    "{retryable_detail} (gave up after {} attempts)",
                    attempt + 1
                )));
            }
            let delay = self.settings.retry.delay(attempt);
            warn!("{retryable_detail}; retrying in {delay:?}");
            std::thread::sleep(delay);
            attempt += 1;
        }
    }
}

fn is_retryable(status: StatusCode) -> bool {
    status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error()
}

fn snippet(s: &str) -> String {
    s.chars().take(200).collect()
}

impl LlmBackend for HttpBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<String> {
        req.validate()?;
        let body = json!({
            "model": self.settings.model,
            "prompt": req.prompt,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
            "stop": req.stop,
        });
        let text = self.post("completions", &body)?;
        let parsed: CompletionResponse = serde_json::from_str(&text)
            .map_err(|e| Error::Backend(format!("malformed completion response: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.text)
            .ok_or_else(|| Error::Backend("completion response has no choices".into()))
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        if text.trim().is_empty() {
            return Err(Error::InvalidInput("nothing to embed".into()));
        }
        let body = json!({ "model": self.settings.embed_model, "input": text });
        let raw = self.post("embeddings", &body)?;
        let parsed: EmbeddingResponse = serde_json::from_str(&raw)
            .map_err(|e| Error::Backend(format!("malformed embedding response: {e}")))?;
        let values = parsed
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| Error::Backend("embedding response has no data".into()))?;
        EmbeddingVector::new(values, self.settings.embed_model.clone())
    }

    fn embedding_model_tag(&self) -> String {
        self.settings.embed_model.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy::default();
        let d: Vec<u64> = (0..3).map(|i| p.delay(i).as_secs()).collect();
        assert_eq!(d, vec![1, 2, 4]);
    }

    #[test]
    fn retryable_statuses() {
        assert!(is_retryable(StatusCode::TOO_MANY_REQUESTS));
        assert!(is_retryable(StatusCode::BAD_GATEWAY));
        assert!(!is_retryable(StatusCode::UNAUTHORIZED));
        assert!(!is_retryable(StatusCode::BAD_REQUEST));
    }
}
