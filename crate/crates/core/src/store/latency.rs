use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DocumentChunk, SearchResponse, VectorStore};
use crate::clock::{Clock, CostModel};
use crate::embedding::UnitVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatencyKind {
    None,
    Fixed,
    #[default]
    Uniform,
}

/// Injected per-search network delay. The default is the 97–307 ms band
/// measured against a hosted vector database.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatencyModel {
    pub kind: LatencyKind,
    pub lo_ms: f64,
    pub hi_ms: f64,
    pub seed: u64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self::uniform(97.0, 307.0, 0)
    }
}

impl LatencyModel {
    pub fn none() -> Self {
        Self {
            kind: LatencyKind::None,
            lo_ms: 0.0,
            hi_ms: 0.0,
            seed: 0,
        }
    }

    pub fn fixed(ms: f64) -> Self {
        Self {
            kind: LatencyKind::Fixed,
            lo_ms: ms,
            hi_ms: ms,
            seed: 0,
        }
    }

    pub fn uniform(lo_ms: f64, hi_ms: f64, seed: u64) -> Self {
        Self {
            kind: LatencyKind::Uniform,
            lo_ms,
            hi_ms,
            seed,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lo_ms.is_finite()
            && self.hi_ms.is_finite()
            && self.lo_ms >= 0.0
            && self.lo_ms <= self.hi_ms;
        if ok {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(format!(
                "latency bounds must satisfy 0 <= lo <= hi, got [{}, {}]",
                self.lo_ms, self.hi_ms
            )))
        }
    }

    /// The delay for draw `key`: a pure function of `(seed, key)`.
    pub fn delay_ms(&self, key: u64) -> f64 {
        match self.kind {
            LatencyKind::None => 0.0,
            LatencyKind::Fixed => self.lo_ms,
            LatencyKind::Uniform => {
                if self.hi_ms <= self.lo_ms {
                    return self.lo_ms;
                }
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(key);
                rng.random_range(self.lo_ms..=self.hi_ms)
            }
        }
    }
}

/// Which agent a search is made for; part of the draw key so that
/// foreground draws line up turn-for-turn across paired runs no matter how
/// much background traffic the dual-agent run adds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Lane {
    Unkeyed = 0,
    Foreground = 1,
    Direct = 2,
    Prediction = 3,
    Priority = 4,
}

/// Packs a lane, a turn index (40 bits) and a slot (16 bits) into a draw key.
pub fn draw_key(lane: Lane, turn: u64, slot: u64) -> u64 {
    ((lane as u64) << 56) | ((turn & 0xFF_FFFF_FFFF) << 16) | (slot & 0xFFFF)
}

/// Wraps a store with injected delay. Results pass through untouched.
///
/// Under the real clock the delay is slept (outside any lock, so concurrent
/// searches overlap) and the reported latency is measured. Under the
/// virtual clock nothing sleeps: the latency is the drawn delay plus the
/// modeled scan cost.
pub struct LatencyStore {
    inner: Arc<dyn VectorStore>,
    model: LatencyModel,
    clock: Arc<Clock>,
    cost: CostModel,
    calls: AtomicU64,
}

impl LatencyStore {
    pub fn new(
        inner: Arc<dyn VectorStore>,
        model: LatencyModel,
        clock: Arc<Clock>,
        cost: CostModel,
    ) -> Self {
        Self {
            inner,
            model,
            clock,
            cost,
            calls: AtomicU64::new(0),
        }
    }

    pub fn model(&self) -> &LatencyModel {
        &self.model
    }

    pub fn inner(&self) -> &Arc<dyn VectorStore> {
        &self.inner
    }
}

impl VectorStore for LatencyStore {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn len(&self) -> usize {
        self.inner.len()
    }

    fn upsert(&self, chunks: Vec<DocumentChunk>) -> Result<usize> {
        self.inner.upsert(chunks)
    }

    fn search(&self, query: &UnitVector, k: usize) -> Result<SearchResponse> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        self.search_keyed(query, k, draw_key(Lane::Unkeyed, n, 0))
    }

    fn search_keyed(&self, query: &UnitVector, k: usize, draw_key: u64) -> Result<SearchResponse> {
        let delay = self.model.delay_ms(draw_key);
        let modeled = delay + self.cost.scan_ms(self.inner.len(), self.inner.dim());
        let (resp, latency) = self.clock.timed(modeled, || {
            self.clock.pause(delay);
            self.inner.search(query, k)
        });
        Ok(resp?.with_latency(latency))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::Timestamp;
    use crate::embedding::normalize;
    use crate::store::FlatStore;

    fn store_with(n: usize) -> Arc<FlatStore> {
        let s = FlatStore::new(3);
        s.upsert(
            (0..n)
                .map(|i| DocumentChunk {
                    chunk_id: format!("d#{i}"),
                    doc_id: "d".into(),
                    text: String::new(),
                    embedding: normalize(&[1.0, i as f64, 2.0]).unwrap(),
                })
                .collect(),
        )
        .unwrap();
        Arc::new(s)
    }

    #[test]
    fn uniform_draws_stay_in_band_and_are_keyed() {
        let m = LatencyModel::uniform(97.0, 307.0, 42);
        for key in 0..500 {
            let d = m.delay_ms(key);
            assert!((97.0..=307.0).contains(&d));
            assert_eq!(d, m.delay_ms(key));
        }
        assert_ne!(m.delay_ms(1), m.delay_ms(2));
        assert_ne!(m.delay_ms(1), m.with_seed(43).delay_ms(1));
    }

    #[test]
    fn virtual_latency_is_delay_plus_scan() {
        let inner = store_with(76);
        let clock = Arc::new(Clock::virtual_at(Timestamp::ZERO));
        let wrapped = LatencyStore::new(
            inner.clone(),
            LatencyModel::uniform(97.0, 307.0, 7),
            clock.clone(),
            CostModel::default(),
        );
        let q = normalize(&[1.0, 1.0, 1.0]).unwrap();
        let key = draw_key(Lane::Foreground, 3, 0);
        let resp = wrapped.search_keyed(&q, 5, key).unwrap();
        let expected =
            LatencyModel::uniform(97.0, 307.0, 7).delay_ms(key) + CostModel::default().scan_ms(76, 3);
        assert_eq!(resp.latency_ms, expected);
        assert!(resp.results.iter().all(|r| r.latency_ms == expected));
        assert_eq!(clock.now(), Timestamp::ZERO, "virtual searches do not move time");

        let plain = inner.search(&q, 5).unwrap();
        let a: Vec<_> = plain.results.iter().map(|r| (&r.chunk.chunk_id, r.score)).collect();
        let b: Vec<_> = resp.results.iter().map(|r| (&r.chunk.chunk_id, r.score)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn real_clock_sleeps_the_drawn_delay() {
        let clock = Arc::new(Clock::real());
        let wrapped =
            LatencyStore::new(store_with(4), LatencyModel::fixed(20.0), clock, CostModel::default());
        let q = normalize(&[1.0, 0.0, 0.0]).unwrap();
        let resp = wrapped.search(&q, 2).unwrap();
        assert!(resp.latency_ms >= 20.0, "{}", resp.latency_ms);
    }

    #[test]
    fn no_latency_reports_scan_time_only() {
        let clock = Arc::new(Clock::real());
        let wrapped =
            LatencyStore::new(store_with(76), LatencyModel::none(), clock, CostModel::default());
        let q = normalize(&[1.0, 0.0, 0.0]).unwrap();
        assert!(wrapped.search(&q, 10).unwrap().latency_ms < 1.0);
    }

    #[test]
    fn unkeyed_sequence_repeats_across_instances() {
        let run = || {
            let clock = Arc::new(Clock::virtual_at(Timestamp::ZERO));
            let w = LatencyStore::new(
                store_with(3),
                LatencyModel::uniform(97.0, 307.0, 5),
                clock,
                CostModel::default(),
            );
            let q = normalize(&[1.0, 0.0, 0.0]).unwrap();
            (0..10).map(|_| w.search(&q, 1).unwrap().latency_ms).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn draw_keys_separate_lanes() {
        assert_ne!(draw_key(Lane::Foreground, 1, 0), draw_key(Lane::Direct, 1, 0));
        assert_ne!(draw_key(Lane::Prediction, 1, 0), draw_key(Lane::Prediction, 1, 1));
        assert!(LatencyModel::uniform(5.0, 1.0, 0).validate().is_err());
    }
}
