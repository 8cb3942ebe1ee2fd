//! Blocking HTTP embedding clients with batching and retry.

use std::thread;
use std::time::Duration;

use log::{debug, warn};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::json;

use super::{
    check_uniform, EmbeddingProvider, EmbeddingProviderConfig, EmbeddingVector, Result,
    RetrievalError,
};
use crate::util::excerpt;

const BASE_BACKOFF: Duration = Duration::from_millis(200);

fn transient(status: StatusCode) -> bool {
    status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error()
}

/// Shared request plumbing for both wire formats.
#[derive(Debug)]
struct HttpEmbedClient {
    config: EmbeddingProviderConfig,
    url: String,
    api_key: Option<String>,
    client: Client,
}

impl HttpEmbedClient {
    fn new(config: EmbeddingProviderConfig, path: &str) -> Result<Self> {
        config.validate()?;
        let endpoint = config
            .endpoint
            .as_deref()
            .ok_or_else(|| RetrievalError::Config("missing endpoint".into()))?;
        let url = format!("{}{}", endpoint.trim_end_matches('/'), path);
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                RetrievalError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let client = Client::builder()
            .timeout(config.timeout())
            .build()
            .map_err(|e| RetrievalError::Config(e.to_string()))?;
        Ok(Self {
            config,
            url,
            api_key,
            client,
        })
    }

    /// POSTs `body`, retrying connection failures, 429 and 5xx with
    /// exponential backoff. Returns the raw response text.
    fn post(&self, body: &serde_json::Value) -> Result<String> {
        let mut attempt = 0;
        loop {
            let mut req = self.client.post(&self.url).json(body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let err = match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp
                        .text()
                        .map_err(|e| RetrievalError::ProviderUnreachable(e.to_string()))?;
                    if status.is_success() {
                        return Ok(text);
                    }
                    let err = RetrievalError::ProviderError {
                        status: status.as_u16(),
                        body: excerpt(&text),
                    };
                    if !transient(status) {
                        return Err(err);
                    }
                    err
                }
                Err(e) => RetrievalError::ProviderUnreachable(e.to_string()),
            };
            if attempt >= self.config.max_retries {
                return Err(err);
            }
            let wait = BASE_BACKOFF * 2u32.saturating_pow(attempt);
            warn!("{}: {err}; retrying in {wait:?}", self.url);
            thread::sleep(wait);
            attempt += 1;
        }
    }

    /// Splits `texts` into batches, runs up to `parallelism` batches at a
    /// time and reassembles results in input order.
    fn embed_all(
        &self,
        texts: &[String],
        one_batch: impl Fn(&[String]) -> Result<Vec<EmbeddingVector>> + Sync,
    ) -> Result<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Err(RetrievalError::EmptyInput);
        }
        let batches: Vec<&[String]> = texts.chunks(self.config.batch_size).collect();
        let mut out = Vec::with_capacity(texts.len());
        for wave in batches.chunks(self.config.parallelism) {
            debug!("{}: embedding {} batches", self.url, wave.len());
            let results: Vec<Result<Vec<EmbeddingVector>>> = if wave.len() == 1 {
                vec![one_batch(wave[0])]
            } else {
                thread::scope(|s| {
                    let handles: Vec<_> = wave.iter().map(|b| s.spawn(|| one_batch(b))).collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("embedding worker panicked"))
                        .collect()
                })
            };
            for (batch, r) in wave.iter().zip(results) {
                let vecs = r?;
                check_uniform(&vecs, batch.len())?;
                out.extend(vecs);
            }
        }
        check_uniform(&out, texts.len())?;
        Ok(out)
    }
}

fn parse_vectors(rows: Vec<Vec<f64>>) -> Result<Vec<EmbeddingVector>> {
    rows.into_iter().map(EmbeddingVector::new).collect()
}

/// `POST {endpoint}/v1/embeddings` in the OpenAI wire format.
#[derive(Debug)]
pub struct OpenAiEmbedder {
    http: HttpEmbedClient,
}

#[derive(Deserialize)]
struct OpenAiResponse {
    data: Vec<OpenAiItem>,
}

#[derive(Deserialize)]
struct OpenAiItem {
    index: usize,
    embedding: Vec<f64>,
}

impl OpenAiEmbedder {
    pub fn new(config: EmbeddingProviderConfig) -> Result<Self> {
        Ok(Self {
            http: HttpEmbedClient::new(config, "/v1/embeddings")?,
        })
    }

    fn batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let body = json!({ "model": self.http.config.model_name, "input": texts });
        let raw = self.http.post(&body)?;
        let mut resp: OpenAiResponse = serde_json::from_str(&raw)
            .map_err(|e| RetrievalError::MalformedResponse(e.to_string()))?;
        resp.data.sort_by_key(|d| d.index);
        if resp.data.iter().enumerate().any(|(i, d)| d.index != i) {
            return Err(RetrievalError::MalformedResponse(
                "embedding indices are not 0..n".into(),
            ));
        }
        parse_vectors(resp.data.into_iter().map(|d| d.embedding).collect())
    }
}

impl EmbeddingProvider for OpenAiEmbedder {
    fn label(&self) -> &str {
        self.http.config.label()
    }

    fn cache_id(&self) -> String {
        format!("openai:{}:{}", self.http.url, self.http.config.model_name)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        self.http.embed_all(texts, |b| self.batch(b))
    }
}

/// `POST {endpoint}/api/embed` in the Ollama wire format.
#[derive(Debug)]
pub struct OllamaEmbedder {
    http: HttpEmbedClient,
}

#[derive(Deserialize)]
struct OllamaResponse {
    embeddings: Vec<Vec<f64>>,
}

impl OllamaEmbedder {
    pub fn new(config: EmbeddingProviderConfig) -> Result<Self> {
        Ok(Self {
            http: HttpEmbedClient::new(config, "/api/embed")?,
        })
    }

    fn batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let body = json!({ "model": self.http.config.model_name, "input": texts });
        let raw = self.http.post(&body)?;
        let resp: OllamaResponse = serde_json::from_str(&raw)
            .map_err(|e| RetrievalError::MalformedResponse(e.to_string()))?;
        parse_vectors(resp.embeddings)
    }
}

impl EmbeddingProvider for OllamaEmbedder {
    fn label(&self) -> &str {
        self.http.config.label()
    }

    fn cache_id(&self) -> String {
        format!("ollama:{}:{}", self.http.url, self.http.config.model_name)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        self.http.embed_all(texts, |b| self.batch(b))
    }
}
