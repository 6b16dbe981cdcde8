//! The authoritative document index.
//!
//! [`FlatStore`] is an exact in-memory inner-product index. [`LatencyStore`]
//! wraps any store with seeded, injected network delay, and [`RemoteStore`]
//! talks to a Qdrant-compatible HTTP service.

mod latency;
mod remote;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use parking_lot::RwLock;

use crate::embedding::{check_dim, dot, UnitVector};
use crate::error::Result;

pub use latency::{draw_key, Lane, LatencyKind, LatencyModel, LatencyStore};
pub use remote::{RemoteStore, RemoteStoreConfig, VDB_API_KEY_ENV};

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentChunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub text: String,
    pub embedding: UnitVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub chunk: DocumentChunk,
    pub score: f32,
    /// Wall (or charged virtual) time of the search that produced this result.
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchResponse {
    pub results: Vec<SearchResult>,
    pub latency_ms: f64,
}

impl SearchResponse {
    pub(crate) fn with_latency(mut self, latency_ms: f64) -> Self {
        self.latency_ms = latency_ms;
        for r in &mut self.results {
            r.latency_ms = latency_ms;
        }
        self
    }
}

pub trait VectorStore: Send + Sync {
    fn dim(&self) -> usize;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inserts or replaces chunks by id; returns how many were written.
    fn upsert(&self, chunks: Vec<DocumentChunk>) -> Result<usize>;

    /// Top `k` chunks by cosine to `query`, best first.
    fn search(&self, query: &UnitVector, k: usize) -> Result<SearchResponse>;

    /// Like [`search`](Self::search), with an explicit key for stores that
    /// draw per-call randomness (see [`LatencyStore`]).
    fn search_keyed(&self, query: &UnitVector, k: usize, _draw_key: u64) -> Result<SearchResponse> {
        self.search(query, k)
    }
}

#[derive(Debug, Default)]
struct FlatInner {
    by_id: HashMap<String, usize>,
    chunks: Vec<DocumentChunk>,
    matrix: Vec<f32>,
}

/// Exact flat-scan store. Readers share a lock; upserts are exclusive.
/// Ties in score go to the chunk inserted first.
#[derive(Debug)]
pub struct FlatStore {
    dim: usize,
    inner: RwLock<FlatInner>,
    searches: AtomicU64,
}

impl FlatStore {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "store dimension must be positive");
        Self {
            dim,
            inner: RwLock::new(FlatInner::default()),
            searches: AtomicU64::new(0),
        }
    }

    /// Number of searches served so far.
    pub fn search_count(&self) -> u64 {
        self.searches.load(Ordering::SeqCst)
    }

    pub fn chunks(&self) -> Vec<DocumentChunk> {
        self.inner.read().chunks.clone()
    }

    pub fn get(&self, chunk_id: &str) -> Option<DocumentChunk> {
        let inner = self.inner.read();
        inner.by_id.get(chunk_id).map(|&i| inner.chunks[i].clone())
    }
}

impl VectorStore for FlatStore {
    fn dim(&self) -> usize {
        self.dim
    }

    fn len(&self) -> usize {
        self.inner.read().chunks.len()
    }

    fn upsert(&self, chunks: Vec<DocumentChunk>) -> Result<usize> {
        for c in &chunks {
            check_dim(self.dim, c.embedding.dim())?;
        }
        let mut inner = self.inner.write();
        let n = chunks.len();
        for chunk in chunks {
            match inner.by_id.get(&chunk.chunk_id).copied() {
                Some(slot) => {
                    let row = slot * self.dim;
                    inner.matrix[row..row + self.dim].copy_from_slice(chunk.embedding.as_slice());
                    inner.chunks[slot] = chunk;
                }
                None => {
                    let slot = inner.chunks.len();
                    inner.by_id.insert(chunk.chunk_id.clone(), slot);
                    inner.matrix.extend_from_slice(chunk.embedding.as_slice());
                    inner.chunks.push(chunk);
                }
            }
        }
        Ok(n)
    }

    fn search(&self, query: &UnitVector, k: usize) -> Result<SearchResponse> {
        check_dim(self.dim, query.dim())?;
        let start = Instant::now();
        self.searches.fetch_add(1, Ordering::SeqCst);
        let inner = self.inner.read();
        let mut scored: Vec<(f32, usize)> = inner
            .matrix
            .chunks_exact(self.dim)
            .map(|row| dot(row, query.as_slice()).clamp(-1.0, 1.0))
            .zip(0..)
            .collect();
        let ranked = top_k(&mut scored, k);
        let results = ranked
            .iter()
            .map(|&(score, slot)| SearchResult {
                chunk: inner.chunks[slot].clone(),
                score,
                latency_ms: 0.0,
            })
            .collect();
        drop(inner);
        let latency_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(SearchResponse { results, latency_ms: 0.0 }.with_latency(latency_ms))
    }
}

/// Sorts `(score, order)` pairs by score descending, then order ascending,
/// and keeps the first `k`.
pub(crate) fn top_k<T: Copy + Ord>(scored: &mut Vec<(f32, T)>, k: usize) -> &[(f32, T)] {
    let cmp = |a: &(f32, T), b: &(f32, T)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if k == 0 {
        scored.clear();
        return scored;
    }
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
    }
    scored.sort_unstable_by(cmp);
    scored
}
