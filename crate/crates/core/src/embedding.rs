//! Unit vectors, the embedder contract, a deterministic hashing embedder,
//! and a client for remote OpenAI-compatible embedding services.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::error::{Error, Result};
use crate::openai::{OpenAiClient, DEFAULT_TIMEOUT_MS};
use crate::text;

pub const EMBED_API_KEY_ENV: &str = "MEMROUTER_EMBED_API_KEY";

/// Dimension of the remote `text-embedding-3-small` model.
pub const REMOTE_DIMENSION: usize = 1536;
pub const HASH_DIMENSION: usize = 256;

const ZERO_NORM: f64 = 1e-12;

/// An L2-normalized embedding. Cloning shares the underlying buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(Arc<[f32]>);

impl UnitVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
    }
}

impl AsRef<[f32]> for UnitVector {
    fn as_ref(&self) -> &[f32] {
        &self.0
    }
}

/// Scales `v` to unit L2 norm.
pub fn normalize(v: &[f64]) -> Result<UnitVector> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > ZERO_NORM) || !norm.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(UnitVector(v.iter().map(|x| (x / norm) as f32).collect()))
}

pub fn normalize_f32(v: &[f32]) -> Result<UnitVector> {
    let wide: Vec<f64> = v.iter().map(|&x| x as f64).collect();
    normalize(&wide)
}

/// Inner product with eight independent accumulators so the loop
/// vectorizes. Every similarity in the crate goes through this kernel.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the required feature was detected at runtime.
        return unsafe { dot_avx2(a, b) };
    }
    dot_lanes::<8>(a, b)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn dot_avx2(a: &[f32], b: &[f32]) -> f32 {
    dot_lanes::<16>(a, b)
}

/// `N` independent accumulators so the loop vectorizes.
#[inline(always)]
fn dot_lanes<const N: usize>(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; N];
    let ca = a.chunks_exact(N);
    let cb = b.chunks_exact(N);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..N {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    acc.iter().sum::<f32>() + tail
}

/// Cosine similarity of two unit vectors, clamped to [-1, 1].
pub fn cosine(a: &UnitVector, b: &UnitVector) -> Result<f32> {
    check_dim(a.dim(), b.dim())?;
    Ok(dot(&a.0, &b.0).clamp(-1.0, 1.0))
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    fn embed(&self, text: &str) -> Result<UnitVector>;

    /// True when embedding runs in-process, so its cost may be modeled
    /// rather than measured under the virtual clock.
    fn is_local(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub dimension: usize,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    pub seed: u64,
    pub timeout_ms: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            dimension: HASH_DIMENSION,
            endpoint: None,
            model_name: None,
            seed: 0,
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }
}

impl EmbedderConfig {
    pub fn remote(endpoint: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            dimension: REMOTE_DIMENSION,
            endpoint: Some(endpoint.into()),
            model_name: Some(model_name.into()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::ConfigInvalid("embedder dimension must be > 0".into()));
        }
        if self.endpoint.is_some() != self.model_name.is_some() {
            return Err(Error::ConfigInvalid(
                "remote embedder needs both endpoint and model_name".into(),
            ));
        }
        Ok(())
    }

    /// Remote client when an endpoint is configured, hashing embedder otherwise.
    pub fn build(&self) -> Result<Arc<dyn Embedder>> {
        self.validate()?;
        Ok(match self.endpoint {
            Some(_) => Arc::new(RemoteEmbedder::new(self)?),
            None => Arc::new(HashEmbedder::new(self.dimension, self.seed)),
        })
    }
}

/// Deterministic signed feature-hashing embedder.
///
/// Each lowercased content token is hashed with the seed; the low bits pick
/// a coordinate and the top bit picks the sign. Counts accumulate and the
/// result is normalized.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, seed }
    }

    pub fn raw(&self, text: &str) -> Result<Vec<f64>> {
        if text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        let mut v = vec![0.0f64; self.dim];
        for token in text::content_tokens(text) {
            let h = xxh3_64_with_seed(token.as_bytes(), self.seed);
            let idx = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[idx] += sign;
        }
        Ok(v)
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<UnitVector> {
        normalize(&self.raw(text)?)
    }
}

pub fn embed_text(text: &str, cfg: &EmbedderConfig) -> Result<UnitVector> {
    HashEmbedder::new(cfg.dimension, cfg.seed).embed(text)
}

pub struct RemoteEmbedder {
    client: OpenAiClient,
    model: String,
    dim: usize,
}

impl RemoteEmbedder {
    pub fn new(cfg: &EmbedderConfig) -> Result<Self> {
        let (Some(endpoint), Some(model)) = (&cfg.endpoint, &cfg.model_name) else {
            return Err(Error::ConfigInvalid(
                "remote embedder needs endpoint and model_name".into(),
            ));
        };
        Ok(Self {
            client: OpenAiClient::new(endpoint, EMBED_API_KEY_ENV, cfg.timeout_ms)?,
            model: model.clone(),
            dim: cfg.dimension,
        })
    }
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<UnitVector> {
        if text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        let raw = self.client.embeddings(&self.model, text)?;
        if raw.len() != self.dim {
            return Err(Error::Protocol(format!(
                "embedding has {} dimensions, expected {}",
                raw.len(),
                self.dim
            )));
        }
        normalize(&raw)
    }

    fn is_local(&self) -> bool {
        false
    }
}

pub fn embed_remote(text: &str, cfg: &EmbedderConfig) -> Result<UnitVector> {
    RemoteEmbedder::new(cfg)?.embed(text)
}
