//! The shared semantic cache.
//!
//! Chunks are indexed by their own embeddings in a flat row-major matrix and
//! searched exhaustively by inner product. Entries expire after a TTL, the
//! least recently accessed entry makes room when the cache is full, and a
//! put whose nearest neighbour is above the dedup threshold refreshes that
//! entry instead of adding a new one.
//!
//! Deletions leave tombstones; the matrix is compacted once tombstones
//! exceed a quarter of `max_size`. Lookups run concurrently under a shared
//! lock and record LRU touches through per-slot atomics; mutations take the
//! lock exclusively.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::embedding::{check_dim, dot, UnitVector};
use crate::error::{Error, Result};
use crate::store::{top_k, DocumentChunk};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntrySource {
    Direct,
    Prediction,
    MissFallback,
    Priority,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub chunk: DocumentChunk,
    /// Store score when fetched. Metadata only; ranking uses query cosine.
    pub relevance_score: f32,
    pub source: EntrySource,
    pub inserted_at: Timestamp,
    pub expires_at: Timestamp,
    pub last_access: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CacheConfig {
    pub max_size: usize,
    pub ttl_seconds: f64,
    pub similarity_threshold: f32,
    pub dedup_threshold: f32,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self {
            max_size: 2000,
            ttl_seconds: 300.0,
            similarity_threshold: 0.40,
            dedup_threshold: 0.95,
        }
    }
}

impl CacheConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if self.max_size == 0 {
            return bad("cache max_size must be > 0".into());
        }
        if !(self.ttl_seconds > 0.0) || !self.ttl_seconds.is_finite() {
            return bad(format!("cache ttl_seconds must be > 0, got {}", self.ttl_seconds));
        }
        if !(0.0..=1.0).contains(&self.similarity_threshold) {
            return bad(format!(
                "similarity threshold must be in [0, 1], got {}",
                self.similarity_threshold
            ));
        }
        if !(0.0..=1.0).contains(&self.dedup_threshold) {
            return bad(format!("dedup threshold must be in [0, 1], got {}", self.dedup_threshold));
        }
        if self.dedup_threshold <= self.similarity_threshold {
            return bad("dedup threshold must exceed the similarity threshold".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CacheStats {
    pub size: usize,
    pub hits: u64,
    pub misses: u64,
    pub puts: u64,
    pub dedup_updates: u64,
    pub evictions_lru: u64,
    pub evictions_ttl: u64,
    pub total_get_latency_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PutOutcome {
    Inserted,
    DedupUpdated,
    EvictedThenInserted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheHit {
    pub entry: CacheEntry,
    pub similarity: f32,
}

#[derive(Debug)]
struct Slot {
    chunk: DocumentChunk,
    relevance_score: f32,
    source: EntrySource,
    inserted_at: Timestamp,
    expires_at: Timestamp,
    last_access: AtomicU64,
    seq: u64,
}

impl Slot {
    fn snapshot(&self) -> CacheEntry {
        CacheEntry {
            chunk: self.chunk.clone(),
            relevance_score: self.relevance_score,
            source: self.source,
            inserted_at: self.inserted_at,
            expires_at: self.expires_at,
            last_access: Timestamp::from_micros(self.last_access.load(Ordering::Relaxed)),
        }
    }
}

#[derive(Debug, Default)]
struct Counters {
    hits: AtomicU64,
    misses: AtomicU64,
    puts: AtomicU64,
    dedup_updates: AtomicU64,
    evictions_lru: AtomicU64,
    evictions_ttl: AtomicU64,
    get_latency_ns: AtomicU64,
}

#[derive(Debug, Default)]
struct Index {
    slots: Vec<Option<Slot>>,
    matrix: Vec<f32>,
    live: usize,
    tombstones: usize,
    next_seq: u64,
}

impl Index {
    fn live(&self) -> impl Iterator<Item = (usize, &Slot)> {
        self.slots.iter().enumerate().filter_map(|(i, s)| s.as_ref().map(|s| (i, s)))
    }

    fn row(&self, i: usize, dim: usize) -> &[f32] {
        &self.matrix[i * dim..(i + 1) * dim]
    }

    fn remove(&mut self, i: usize) {
        if self.slots[i].take().is_some() {
            self.live -= 1;
            self.tombstones += 1;
        }
    }

    /// Drops tombstoned rows, keeping the surviving order.
    fn compact(&mut self, dim: usize) {
        let mut matrix = Vec::with_capacity(self.live * dim);
        let mut slots = Vec::with_capacity(self.live);
        for (i, slot) in std::mem::take(&mut self.slots).into_iter().enumerate() {
            if let Some(s) = slot {
                matrix.extend_from_slice(&self.matrix[i * dim..(i + 1) * dim]);
                slots.push(Some(s));
            }
        }
        self.slots = slots;
        self.matrix = matrix;
        self.tombstones = 0;
    }
}

#[derive(Debug)]
pub struct SemanticCache {
    cfg: CacheConfig,
    dim: usize,
    index: RwLock<Index>,
    counters: Counters,
}

impl SemanticCache {
    pub fn new(dim: usize, cfg: CacheConfig) -> Result<Self> {
        cfg.validate()?;
        if dim == 0 {
            return Err(Error::ConfigInvalid("cache dimension must be > 0".into()));
        }
        Ok(Self {
            cfg,
            dim,
            index: RwLock::new(Index::default()),
            counters: Counters::default(),
        })
    }

    pub fn config(&self) -> &CacheConfig {
        &self.cfg
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.read().live
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn put(
        &self,
        chunk: DocumentChunk,
        relevance_score: f32,
        source: EntrySource,
        now: Timestamp,
    ) -> Result<PutOutcome> {
        check_dim(self.dim, chunk.embedding.dim())?;
        let expires_at = now.plus_secs(self.cfg.ttl_seconds);
        let mut index = self.index.write();
        self.counters.puts.fetch_add(1, Ordering::Relaxed);

        let nearest = index
            .live()
            .map(|(i, s)| (dot(index.row(i, self.dim), chunk.embedding.as_slice()), s.seq, i))
            .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        if let Some((sim, _, i)) = nearest {
            if sim > self.cfg.dedup_threshold {
                let slot = index.slots[i].as_mut().expect("live slot");
                // The stored vector stays the index key; the payload is refreshed.
                let embedding = std::mem::replace(&mut slot.chunk.embedding, chunk.embedding.clone());
                slot.chunk = DocumentChunk { embedding, ..chunk };
                slot.relevance_score = slot.relevance_score.max(relevance_score);
                slot.source = source;
                slot.expires_at = expires_at;
                self.counters.dedup_updates.fetch_add(1, Ordering::Relaxed);
                return Ok(PutOutcome::DedupUpdated);
            }
        }

        let mut outcome = PutOutcome::Inserted;
        if index.live >= self.cfg.max_size {
            let victim = index
                .live()
                .min_by_key(|(_, s)| (s.last_access.load(Ordering::Relaxed), s.seq))
                .map(|(i, _)| i);
            if let Some(i) = victim {
                index.remove(i);
                self.counters.evictions_lru.fetch_add(1, Ordering::Relaxed);
                outcome = PutOutcome::EvictedThenInserted;
            }
        }
        if index.tombstones * 4 > self.cfg.max_size {
            index.compact(self.dim);
        }
        let seq = index.next_seq;
        index.next_seq += 1;
        index.matrix.extend_from_slice(chunk.embedding.as_slice());
        index.slots.push(Some(Slot {
            chunk,
            relevance_score,
            source,
            inserted_at: now,
            expires_at,
            last_access: AtomicU64::new(now.as_micros()),
            seq,
        }));
        index.live += 1;
        Ok(outcome)
    }

    /// Top `k` live entries with cosine ≥ `threshold`, best first. Returned
    /// entries have their last access set to `now`.
    pub fn get(
        &self,
        query: &UnitVector,
        k: usize,
        threshold: f32,
        now: Timestamp,
    ) -> Result<Vec<CacheHit>> {
        check_dim(self.dim, query.dim())?;
        let start = Instant::now();
        let index = self.index.read();
        let mut scored: Vec<(f32, (u64, usize))> = index
            .live()
            .filter(|(_, s)| s.expires_at > now)
            .filter_map(|(i, s)| {
                let sim = dot(index.row(i, self.dim), query.as_slice()).clamp(-1.0, 1.0);
                (sim >= threshold).then_some((sim, (s.seq, i)))
            })
            .collect();
        let hits: Vec<CacheHit> = top_k(&mut scored, k)
            .iter()
            .map(|&(similarity, (_, i))| {
                let slot = index.slots[i].as_ref().expect("live slot");
                slot.last_access.fetch_max(now.as_micros(), Ordering::Relaxed);
                let mut entry = slot.snapshot();
                entry.last_access = now.max(entry.last_access);
                CacheHit { entry, similarity }
            })
            .collect();
        let counter = if hits.is_empty() {
            &self.counters.misses
        } else {
            &self.counters.hits
        };
        counter.fetch_add(1, Ordering::Relaxed);
        self.counters
            .get_latency_ns
            .fetch_add(start.elapsed().as_nanos() as u64, Ordering::Relaxed);
        drop(index);
        Ok(hits)
    }

    /// Removes every entry whose deadline has passed.
    pub fn evict_expired(&self, now: Timestamp) -> usize {
        let mut index = self.index.write();
        let expired: Vec<usize> = index
            .live()
            .filter(|(_, s)| s.expires_at <= now)
            .map(|(i, _)| i)
            .collect();
        for &i in &expired {
            index.remove(i);
        }
        if index.tombstones * 4 > self.cfg.max_size {
            index.compact(self.dim);
        }
        self.counters
            .evictions_ttl
            .fetch_add(expired.len() as u64, Ordering::Relaxed);
        expired.len()
    }

    /// Empties the cache. Lifetime counters are kept.
    pub fn clear(&self) {
        let mut index = self.index.write();
        let next_seq = index.next_seq;
        *index = Index {
            next_seq,
            ..Index::default()
        };
    }

    pub fn stats(&self) -> CacheStats {
        // Exclusive so no operation is half-counted in the snapshot.
        let index = self.index.write();
        let c = &self.counters;
        CacheStats {
            size: index.live,
            hits: c.hits.load(Ordering::Relaxed),
            misses: c.misses.load(Ordering::Relaxed),
            puts: c.puts.load(Ordering::Relaxed),
            dedup_updates: c.dedup_updates.load(Ordering::Relaxed),
            evictions_lru: c.evictions_lru.load(Ordering::Relaxed),
            evictions_ttl: c.evictions_ttl.load(Ordering::Relaxed),
            total_get_latency_ms: c.get_latency_ns.load(Ordering::Relaxed) as f64 / 1e6,
        }
    }

    /// Live entries in insertion order, expired ones included.
    pub fn entries(&self) -> Vec<CacheEntry> {
        self.index.read().live().map(|(_, s)| s.snapshot()).collect()
    }
}
