//! Completion backends: a seeded mock, a content-addressed replay cache and
//! an HTTP backend for OpenAI-compatible chat endpoints.

mod cache;
#[cfg(feature = "live")]
mod live;
mod mock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::ReplayCache;
#[cfg(feature = "live")]
pub use live::{LiveBackend, LiveConfig};
pub use mock::{AnswerSheet, MockBackend, MockProfile};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("no cached reply for {0}")]
    CacheMiss(String),
    #[error("cache i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("backend configuration: {0}")]
    Config(String),
}

/// Decoding parameters sent with every completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_tokens: u32,
    /// Per-request sampling seed, where the backend supports one.
    pub sample_seed: Option<u64>,
}

impl Default for DecodeParams {
    /// Greedy decoding.
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: 512,
            sample_seed: None,
        }
    }
}

impl DecodeParams {
    /// Stable textual form used in cache keys.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("decode params serialise")
    }
}

/// Anything that turns a prompt into a reply. Implementations must tolerate
/// concurrent calls.
pub trait CompletionBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, prompt: &str, params: &DecodeParams) -> Result<String, BackendError>;
}

/// Closures are backends; handy for scripted tests.
impl<F> CompletionBackend for F
where
    F: Fn(&str, &DecodeParams) -> Result<String, BackendError> + Send + Sync,
{
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, prompt: &str, params: &DecodeParams) -> Result<String, BackendError> {
        self(prompt, params)
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for std::sync::Arc<B> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, prompt: &str, params: &DecodeParams) -> Result<String, BackendError> {
        (**self).complete(prompt, params)
    }
}
