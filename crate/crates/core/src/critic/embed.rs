//! Text embedders feeding the critic.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::CriticError;

pub const ENV_EMB_ENDPOINT: &str = "WM_EMB_ENDPOINT";
pub const ENV_EMB_MODEL: &str = "WM_EMB_MODEL";

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    MockHash,
    Remote,
}

/// Serializable description of an embedder, stored in model files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderSpec {
    pub kind: EmbedderKind,
    pub dim: usize,
}

impl EmbedderSpec {
    pub fn mock(dim: usize) -> Self {
        Self {
            kind: EmbedderKind::MockHash,
            dim,
        }
    }

    /// Instantiates the embedder; the remote variant reads its endpoint and
    /// model from the environment.
    pub fn build(&self) -> Result<Box<dyn Embedder>, CriticError> {
        match self.kind {
            EmbedderKind::MockHash => Ok(Box::new(MockHashEmbedder::new(self.dim)?)),
            EmbedderKind::Remote => Ok(Box::new(RemoteEmbedder::from_env(self.dim)?)),
        }
    }
}

/// Maps text to a unit-norm vector (or the zero vector for empty text).
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn spec(&self) -> EmbedderSpec;
    fn embed(&self, text: &str) -> Result<Vec<f64>, CriticError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, CriticError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Signed feature hashing of tokens with FNV-1a.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MockHashEmbedder {
    dim: usize,
}

impl MockHashEmbedder {
    pub fn new(dim: usize) -> Result<Self, CriticError> {
        if dim == 0 {
            return Err(CriticError::DimMismatch {
                expected: 1,
                got: 0,
            });
        }
        Ok(Self { dim })
    }
}

impl Embedder for MockHashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn spec(&self) -> EmbedderSpec {
        EmbedderSpec::mock(self.dim)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, CriticError> {
        let mut v = vec![0.0; self.dim];
        for token in tokenize(text) {
            let h = fnv1a64(token.as_bytes());
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        l2_normalize(&mut v);
        Ok(v)
    }
}

/// Client for `POST {endpoint}/embeddings`.
pub struct RemoteEmbedder {
    endpoint: String,
    model: String,
    dim: usize,
    http: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
#[serde(untagged)]
enum EmbeddingResponse {
    Data { data: Vec<EmbeddingItem> },
    Bare { embeddings: Vec<Vec<f64>> },
    List(Vec<Vec<f64>>),
}

#[derive(Deserialize)]
struct EmbeddingItem {
    embedding: Vec<f64>,
}

impl RemoteEmbedder {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        dim: usize,
    ) -> Result<Self, CriticError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| CriticError::RemoteUnavailable(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            model: model.into(),
            dim,
            http,
        })
    }

    pub fn from_env(dim: usize) -> Result<Self, CriticError> {
        let endpoint = std::env::var(ENV_EMB_ENDPOINT).map_err(|_| {
            CriticError::RemoteUnavailable(format!("{ENV_EMB_ENDPOINT} is not set"))
        })?;
        let model = std::env::var(ENV_EMB_MODEL).unwrap_or_default();
        Self::new(endpoint, model, dim)
    }
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn spec(&self) -> EmbedderSpec {
        EmbedderSpec {
            kind: EmbedderKind::Remote,
            dim: self.dim,
        }
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, CriticError> {
        let mut out = self.embed_batch(&[text])?;
        Ok(out.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, CriticError> {
        let url = format!("{}/embeddings", self.endpoint.trim_end_matches('/'));
        let unavailable = |e: String| CriticError::RemoteUnavailable(e);
        let resp = self
            .http
            .post(url)
            .json(&EmbeddingRequest {
                model: &self.model,
                input: texts,
            })
            .send()
            .map_err(|e| unavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(unavailable(format!("HTTP {}", resp.status())));
        }
        let vectors = match resp
            .json::<EmbeddingResponse>()
            .map_err(|e| unavailable(e.to_string()))?
        {
            EmbeddingResponse::Data { data } => data.into_iter().map(|d| d.embedding).collect(),
            EmbeddingResponse::Bare { embeddings } => embeddings,
            EmbeddingResponse::List(v) => v,
        };
        if vectors.len() != texts.len() {
            return Err(unavailable(format!(
                "expected {} vectors, got {}",
                texts.len(),
                vectors.len()
            )));
        }
        vectors
            .into_iter()
            .zip(texts)
            .map(|(mut v, text)| {
                if v.len() != self.dim {
                    return Err(CriticError::DimMismatch {
                        expected: self.dim,
                        got: v.len(),
                    });
                }
                if text.is_empty() {
                    v.iter_mut().for_each(|x| *x = 0.0);
                }
                l2_normalize(&mut v);
                Ok(v)
            })
            .collect()
    }
}
