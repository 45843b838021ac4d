//! Embedding providers and cosine similarity.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hashing::{derive_seed, fnv1a};
use crate::http::{decode, join_url, HttpError, JsonClient, RetryPolicy};

#[derive(Debug, Clone, thiserror::Error)]
pub enum EmbeddingError {
    #[error("embedding request failed: {0}")]
    Transport(#[from] HttpError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("provider returned a zero vector")]
    ZeroVector,
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("embedding is empty")]
    Empty,
    #[error("provider returned {got} embeddings for {expected} inputs")]
    CountMismatch { expected: usize, got: usize },
    #[error("no texts to embed")]
    NoInput,
}

impl EmbeddingError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, EmbeddingError::Transport(e) if e.is_retryable())
    }
}

/// A dense, finite, non-zero embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    norm: f64,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::Empty);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(EmbeddingError::ZeroVector);
        }
        Ok(Self { values, norm })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }
}

/// Cosine similarity of two raw embeddings, clamped to [-1, 1].
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    let sq_a: f64 = a.values.iter().map(|v| v * v).sum();
    let sq_b: f64 = b.values.iter().map(|v| v * v).sum();
    // sqrt of the product keeps cosine(a, a) exactly 1 and the result symmetric
    Ok((dot / (sq_a * sq_b).sqrt()).clamp(-1.0, 1.0))
}

/// Maps text to embeddings. Implementations must be deterministic per
/// instance and safe to call from several threads.
pub trait EmbeddingProvider: Send + Sync {
    fn model_id(&self) -> &str;

    /// One vector per input, order-aligned, all of the same dimension.
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError>;

    /// Human-readable description for run manifests.
    fn describe(&self) -> String {
        self.model_id().to_string()
    }
}

/// Deterministic, offline embedder for tests and desk-scale runs.
///
/// Each lower-cased alphanumeric token contributes a pseudo-random vector
/// seeded by `(model seed, token)`; coordinate 0 is fixed at 1.0 so the
/// result is never zero. Texts sharing vocabulary therefore score higher,
/// and different model ids produce different similarity landscapes.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    model_id: String,
    dim: usize,
    seed: u64,
}

impl HashEmbedder {
    pub const DEFAULT_DIM: usize = 64;

    pub fn new(model_id: impl Into<String>, dim: usize) -> Self {
        let model_id = model_id.into();
        let seed = fnv1a(model_id.as_bytes());
        Self { model_id, dim: dim.max(2), seed }
    }

    pub fn embed_one(&self, text: &str) -> EmbeddingVector {
        let mut values = vec![0.0; self.dim];
        values[0] = 1.0;
        for token in text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            let token = token.to_lowercase();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[&token]));
            for v in values.iter_mut().skip(1) {
                *v += rng.gen_range(-1.0..1.0);
            }
        }
        EmbeddingVector::new(values).expect("coordinate 0 keeps the vector non-zero")
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        if texts.is_empty() {
            return Err(EmbeddingError::NoInput);
        }
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }

    fn describe(&self) -> String {
        format!("{} (deterministic-test, dim {})", self.model_id, self.dim)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteEmbedderConfig {
    /// Base URL; requests go to `<endpoint>/v1/embeddings`.
    pub endpoint: String,
    /// Model name sent on the wire.
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_batch_size() -> usize {
    64
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

/// Client for an OpenAI-compatible `/v1/embeddings` endpoint.
#[derive(Debug)]
pub struct RemoteEmbedder {
    model_id: String,
    config: RemoteEmbedderConfig,
    client: JsonClient,
    dim: OnceLock<usize>,
}

impl RemoteEmbedder {
    pub fn new(model_id: impl Into<String>, config: RemoteEmbedderConfig) -> Result<Self, EmbeddingError> {
        let client = JsonClient::new(config.api_key_env.as_deref(), config.retry)?;
        Ok(Self { model_id: model_id.into(), config, client, dim: OnceLock::new() })
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        let body = serde_json::json!({ "model": self.config.model, "input": texts });
        let url = join_url(&self.config.endpoint, "v1/embeddings");
        let mut resp: EmbeddingsResponse = decode(self.client.post_json(&url, &body)?)?;
        if resp.data.len() != texts.len() {
            return Err(EmbeddingError::CountMismatch { expected: texts.len(), got: resp.data.len() });
        }
        if resp.data.iter().all(|d| d.index.is_some()) {
            resp.data.sort_by_key(|d| d.index);
        }
        let mut out = Vec::with_capacity(resp.data.len());
        for datum in resp.data {
            let got = datum.embedding.len();
            let expected = *self.dim.get_or_init(|| got);
            if got != expected {
                return Err(EmbeddingError::DimensionMismatch { expected, got });
            }
            out.push(EmbeddingVector::new(datum.embedding)?);
        }
        Ok(out)
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        if texts.is_empty() {
            return Err(EmbeddingError::NoInput);
        }
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.config.batch_size.max(1)) {
            out.extend(self.embed_batch(batch)?);
        }
        Ok(out)
    }

    fn describe(&self) -> String {
        format!("{} (remote {} @ {})", self.model_id, self.config.model, self.config.endpoint)
    }
}
