//! Embedding providers, an exact in-memory vector index and top-k search.

mod cache;
mod http;
mod index;
mod mock;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{CachedEmbedder, EmbeddingCache};
pub use http::{OllamaEmbedder, OpenAiEmbedder};
pub use index::{build_index, cosine_similarity, Retrieved, ScoredChunk, VectorIndex};
pub use mock::{MockEmbedder, ScriptedEmbedder, MOCK_DOMAIN_TAG};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error("embedding provider unreachable: {0}")]
    ProviderUnreachable(String),
    #[error("embedding provider returned {status}: {body}")]
    ProviderError { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("{chunks} chunks but {vectors} vectors")]
    LengthMismatch { chunks: usize, vectors: usize },
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("nothing to embed")]
    EmptyInput,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("invalid provider config: {0}")]
    Config(String),
}

pub type Result<T, E = RetrievalError> = std::result::Result<T, E>;

/// A finite, fixed-length embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(RetrievalError::DimensionMismatch {
                expected: 1,
                actual: 0,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RetrievalError::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, x| acc + x * x).sqrt()
    }
}

/// Anything that turns texts into vectors.
///
/// `label` names the provider in result tables and cache keys; two
/// providers with the same label must embed identically.
pub trait EmbeddingProvider: Send + Sync {
    fn label(&self) -> &str;

    /// Identity used for cache keys: provider kind, endpoint and model.
    /// Defaults to the label.
    fn cache_id(&self) -> String {
        self.label().to_owned()
    }

    /// One vector per text, in input order.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for std::sync::Arc<T> {
    fn label(&self) -> &str {
        (**self).label()
    }

    fn cache_id(&self) -> String {
        (**self).cache_id()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        (**self).embed_batch(texts)
    }
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<T> {
    fn label(&self) -> &str {
        (**self).label()
    }

    fn cache_id(&self) -> String {
        (**self).cache_id()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        (**self).embed_batch(texts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    HttpOpenaiCompatible,
    HttpOllama,
    DeterministicMock,
}

fn default_batch_size() -> usize {
    32
}
fn default_timeout_secs() -> u64 {
    60
}
fn default_max_retries() -> u32 {
    3
}
fn default_parallelism() -> usize {
    1
}
fn default_mock_dim() -> usize {
    mock::DEFAULT_DIM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingProviderConfig {
    pub kind: ProviderKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    pub model_name: String,
    /// Overrides the label used in tables; defaults to `model_name`.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Concurrent HTTP batches per embed call.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Prepended to every question before embedding.
    #[serde(default)]
    pub query_prefix: String,
    /// Prepended to every chunk before embedding.
    #[serde(default)]
    pub passage_prefix: String,
    /// Name of the environment variable holding a bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Vector length of the mock provider.
    #[serde(default = "default_mock_dim")]
    pub dim: usize,
}

impl EmbeddingProviderConfig {
    pub fn mock(dim: usize) -> Self {
        Self {
            kind: ProviderKind::DeterministicMock,
            endpoint: None,
            model_name: format!("hashed-bow-v1-{dim}"),
            label: Some("mock".into()),
            batch_size: default_batch_size(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            parallelism: 1,
            query_prefix: String::new(),
            passage_prefix: String::new(),
            api_key_env: None,
            dim,
        }
    }

    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.model_name)
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(RetrievalError::Config("batch_size must be at least 1".into()));
        }
        if self.parallelism == 0 {
            return Err(RetrievalError::Config("parallelism must be at least 1".into()));
        }
        match self.kind {
            ProviderKind::DeterministicMock if self.dim == 0 => {
                Err(RetrievalError::Config("mock dim must be at least 1".into()))
            }
            ProviderKind::HttpOpenaiCompatible | ProviderKind::HttpOllama
                if self.endpoint.is_none() =>
            {
                Err(RetrievalError::Config(format!(
                    "provider {} needs an endpoint",
                    self.label()
                )))
            }
            _ => Ok(()),
        }
    }

    /// Instantiates the configured provider.
    pub fn build(&self) -> Result<Box<dyn EmbeddingProvider>> {
        self.validate()?;
        Ok(match self.kind {
            ProviderKind::DeterministicMock => {
                Box::new(MockEmbedder::new(self.dim).with_label(self.label()))
            }
            ProviderKind::HttpOpenaiCompatible => Box::new(OpenAiEmbedder::new(self.clone())?),
            ProviderKind::HttpOllama => Box::new(OllamaEmbedder::new(self.clone())?),
        })
    }
}

/// A provider plus the instruction prefixes applied before embedding.
pub struct Embedder {
    provider: Box<dyn EmbeddingProvider>,
    query_prefix: String,
    passage_prefix: String,
}

impl Embedder {
    pub fn new(provider: impl EmbeddingProvider + 'static) -> Self {
        Self::boxed(Box::new(provider))
    }

    pub fn boxed(provider: Box<dyn EmbeddingProvider>) -> Self {
        Self {
            provider,
            query_prefix: String::new(),
            passage_prefix: String::new(),
        }
    }

    pub fn from_config(config: &EmbeddingProviderConfig) -> Result<Self> {
        Ok(Self::boxed(config.build()?)
            .with_prefixes(config.query_prefix.clone(), config.passage_prefix.clone()))
    }

    pub fn with_prefixes(mut self, query: impl Into<String>, passage: impl Into<String>) -> Self {
        self.query_prefix = query.into();
        self.passage_prefix = passage.into();
        self
    }

    pub fn label(&self) -> &str {
        self.provider.label()
    }

    pub fn provider(&self) -> &dyn EmbeddingProvider {
        self.provider.as_ref()
    }

    pub fn query_text(&self, question: &str) -> String {
        format!("{}{question}", self.query_prefix)
    }

    pub fn passage_text(&self, chunk: &str) -> String {
        format!("{}{chunk}", self.passage_prefix)
    }
}

impl std::fmt::Debug for Embedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Embedder")
            .field("label", &self.label())
            .field("query_prefix", &self.query_prefix)
            .field("passage_prefix", &self.passage_prefix)
            .finish()
    }
}

/// Checks that a provider answered once per text with one consistent dim.
pub(crate) fn check_uniform(vectors: &[EmbeddingVector], expected_len: usize) -> Result<()> {
    if vectors.len() != expected_len {
        return Err(RetrievalError::MalformedResponse(format!(
            "expected {expected_len} embeddings, got {}",
            vectors.len()
        )));
    }
    if let Some(first) = vectors.first() {
        if let Some(bad) = vectors.iter().find(|v| v.dim() != first.dim()) {
            return Err(RetrievalError::DimensionMismatch {
                expected: first.dim(),
                actual: bad.dim(),
            });
        }
    }
    Ok(())
}
