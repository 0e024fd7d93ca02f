//! Text-completion and embedding backends.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::EmbeddingVector;

mod cassette;
mod http;
mod scripted;

pub use cassette::{
    Cassette, CassetteEntry, CassetteRequest, CassetteResponse, Journal, RecordingBackend,
    ReplayBackend,
};
pub use http::{HttpBackend, HttpSettings, RetryPolicy, API_KEY_ENV};
pub use scripted::{ScriptedBackend, ScriptedPolicy, ELICITATION_MARKER};

pub const DEFAULT_MAX_TOKENS: usize = 512;
pub const DEFAULT_STOP: &str = "\n\nDataset:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<Vec<String>>,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, temperature: f64) -> Result<Self> {
        let req = CompletionRequest {
            prompt: prompt.into(),
            temperature,
            max_tokens: DEFAULT_MAX_TOKENS,
            stop: Some(vec![DEFAULT_STOP.to_string()]),
        };
        req.validate()?;
        Ok(req)
    }

    pub fn with_max_tokens(mut self, max_tokens: usize) -> Result<Self> {
        self.max_tokens = max_tokens;
        self.validate()?;
        Ok(self)
    }

    pub fn with_stop(mut self, stop: Option<Vec<String>>) -> Self {
        self.stop = stop;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.prompt.is_empty() {
            return Err(Error::InvalidInput("empty prompt".into()));
        }
        if !(0.0..=1.0).contains(&self.temperature) {
            return Err(Error::InvalidInput(format!(
                "temperature {} outside [0, 1]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(Error::InvalidInput("max_tokens must be at least 1".into()));
        }
        Ok(())
    }
}

/// A language model reachable for completions and embeddings.
pub trait LlmBackend: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<String>;

    fn embed(&self, text: &str) -> Result<EmbeddingVector>;

    /// Tag of the embeddings this backend produces; cached vectors with a
    /// different tag are recomputed.
    fn embedding_model_tag(&self) -> String;
}

impl<B: LlmBackend + ?Sized> LlmBackend for &B {
    fn complete(&self, req: &CompletionRequest) -> Result<String> {
        (**self).complete(req)
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        (**self).embed(text)
    }
    fn embedding_model_tag(&self) -> String {
        (**self).embedding_model_tag()
    }
}

impl<B: LlmBackend + ?Sized> LlmBackend for Box<B> {
    fn complete(&self, req: &CompletionRequest) -> Result<String> {
        (**self).complete(req)
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        (**self).embed(text)
    }
    fn embedding_model_tag(&self) -> String {
        (**self).embedding_model_tag()
    }
}

/// Wraps a backend and keeps every completion request it forwards.
pub struct Observed<B> {
    inner: B,
    requests: Mutex<Vec<CompletionRequest>>,
}

impl<B: LlmBackend> Observed<B> {
    pub fn new(inner: B) -> Self {
        Observed {
            inner,
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.requests.lock().expect("poisoned").clone()
    }

    pub fn call_count(&self) -> usize {
        self.requests.lock().expect("poisoned").len()
    }
}

impl<B: LlmBackend> LlmBackend for Observed<B> {
    fn complete(&self, req: &CompletionRequest) -> Result<String> {
        self.requests.lock().expect("poisoned").push(req.clone());
        self.inner.complete(req)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        self.inner.embed(text)
    }

    fn embedding_model_tag(&self) -> String {
        self.inner.embedding_model_tag()
    }
}

/// Counting semaphore bounding concurrent requests.
pub(crate) struct Semaphore {
    permits: Mutex<usize>,
    cv: std::sync::Condvar,
}

pub(crate) struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    pub(crate) fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits.max(1)),
            cv: std::sync::Condvar::new(),
        }
    }

    pub(crate) fn acquire(&self) -> Permit<'_> {
        let mut p = self.permits.lock().expect("poisoned");
        while *p == 0 {
            p = self.cv.wait(p).expect("poisoned");
        }
        *p -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("poisoned") += 1;
        self.0.cv.notify_one();
    }
}
