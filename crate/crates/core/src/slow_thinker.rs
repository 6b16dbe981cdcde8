//! The background agent.
//!
//! For each user utterance it caches the direct search results, predicts a
//! handful of follow-up topics, and prefetches each prediction's results in
//! parallel. On a foreground miss it fetches a wider result set around the
//! missed query. Nothing here ever fails a turn: errors are logged and
//! reported.

use std::sync::Arc;

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};

use crate::cache::{EntrySource, SemanticCache};
use crate::clock::Timestamp;
use crate::embedding::Embedder;
use crate::error::{Error, Result};
use crate::predictor::{KeywordPredictor, Prediction, PredictionContext, Predictor, PredictorConfig};
use crate::store::{draw_key, Lane, SearchResult, VectorStore};
use crate::stream::{ConversationEvent, EventKind, Turn};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlowThinkerConfig {
    pub prefetch_top_k: usize,
    pub rate_limit_seconds: f64,
    pub priority_k_multiplier: usize,
    pub predictor: PredictorConfig,
}

impl Default for SlowThinkerConfig {
    fn default() -> Self {
        Self {
            prefetch_top_k: 10,
            rate_limit_seconds: 0.5,
            priority_k_multiplier: 2,
            predictor: PredictorConfig::default(),
        }
    }
}

impl SlowThinkerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.prefetch_top_k == 0 {
            return Err(Error::ConfigInvalid("prefetch_top_k must be >= 1".into()));
        }
        if self.priority_k_multiplier == 0 {
            return Err(Error::ConfigInvalid("priority_k_multiplier must be >= 1".into()));
        }
        if !(self.rate_limit_seconds >= 0.0) || !self.rate_limit_seconds.is_finite() {
            return Err(Error::ConfigInvalid(format!(
                "rate_limit_seconds must be >= 0, got {}",
                self.rate_limit_seconds
            )));
        }
        self.predictor.validate()
    }
}

/// What one utterance's background work achieved. Counts are cache writes,
/// refreshes of near-duplicates included.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrefetchReport {
    pub turn_index: u64,
    pub direct_cached: usize,
    pub predictions_made: usize,
    pub prefetched: usize,
    pub rate_limited: bool,
    /// The configured predictor failed and keyword prediction stood in.
    pub degraded: bool,
    pub errors: Vec<String>,
}

pub struct SlowThinker {
    cfg: SlowThinkerConfig,
    embedder: Arc<dyn Embedder>,
    store: Arc<dyn VectorStore>,
    cache: Arc<SemanticCache>,
    predictor: Arc<dyn Predictor>,
    last_prediction: Mutex<Option<Timestamp>>,
    ordered_puts: bool,
}

impl SlowThinker {
    pub fn new(
        cfg: SlowThinkerConfig,
        embedder: Arc<dyn Embedder>,
        store: Arc<dyn VectorStore>,
        cache: Arc<SemanticCache>,
        predictor: Arc<dyn Predictor>,
    ) -> Self {
        Self {
            cfg,
            embedder,
            store,
            cache,
            predictor,
            last_prediction: Mutex::new(None),
            ordered_puts: false,
        }
    }

    /// Makes parallel prefetch write to the cache in prediction order, so
    /// the resulting cache state does not depend on thread timing.
    pub fn with_ordered_puts(mut self, ordered: bool) -> Self {
        self.ordered_puts = ordered;
        self
    }

    pub fn config(&self) -> &SlowThinkerConfig {
        &self.cfg
    }

    fn fetch(&self, text: &str, k: usize, key: u64) -> Result<Vec<SearchResult>> {
        let q = self.embedder.embed(text)?;
        Ok(self.store.search_keyed(&q, k, key)?.results)
    }

    fn put_all(&self, results: Vec<SearchResult>, source: EntrySource, now: Timestamp) -> Result<usize> {
        let mut n = 0;
        for r in results {
            self.cache.put(r.chunk, r.score, source, now)?;
            n += 1;
        }
        Ok(n)
    }

    pub fn on_user_utterance(&self, event: &ConversationEvent, context: &[Turn], now: Timestamp) -> PrefetchReport {
        debug_assert_eq!(event.kind, EventKind::UserUtterance);
        let turn = event.turn_index;
        let mut report = PrefetchReport {
            turn_index: turn,
            ..Default::default()
        };

        let direct = self
            .fetch(&event.text, self.cfg.prefetch_top_k, draw_key(Lane::Direct, turn, 0))
            .and_then(|rs| self.put_all(rs, EntrySource::Direct, now));
        match direct {
            Ok(n) => report.direct_cached = n,
            Err(e) => {
                log::warn!("direct retrieval for turn {turn} failed: {e}");
                report.errors.push(format!("direct: {e}"));
            }
        }

        {
            let mut last = self.last_prediction.lock();
            if let Some(prev) = *last {
                if now.secs_since(prev) < self.cfg.rate_limit_seconds {
                    report.rate_limited = true;
                    return report;
                }
            }
            *last = Some(now);
        }

        let n = self.cfg.predictor.max_predictions;
        let ctx = PredictionContext {
            turns: context,
            turn_index: turn,
        };
        let predictions = match self.predictor.predict(&ctx, n) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("{} predictor failed on turn {turn}, using keywords: {e}", self.predictor.name());
                report.degraded = true;
                report.errors.push(format!("predict: {e}"));
                KeywordPredictor.predict(&ctx, n).unwrap_or_default()
            }
        };
        report.predictions_made = predictions.len();

        let outcomes = self.prefetch(&predictions, turn, now);
        for (i, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                Ok(n) => report.prefetched += n,
                Err(e) => {
                    log::warn!("prefetch {i} for turn {turn} failed: {e}");
                    report.errors.push(format!("prefetch {i}: {e}"));
                }
            }
        }
        report
    }

    /// One thread per prediction, each doing embed, search, then put.
    fn prefetch(&self, predictions: &[Prediction], turn: u64, now: Timestamp) -> Vec<Result<usize>> {
        let turnstile = Turnstile::default();
        std::thread::scope(|s| {
            let handles: Vec<_> = predictions
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let turnstile = &turnstile;
                    s.spawn(move || {
                        let key = draw_key(Lane::Prediction, turn, i as u64);
                        let fetched = self.fetch(&p.text, self.cfg.prefetch_top_k, key);
                        let _slot = self.ordered_puts.then(|| turnstile.enter(i));
                        fetched.and_then(|rs| self.put_all(rs, EntrySource::Prediction, now))
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Protocol("prefetch task panicked".into()))))
                .collect()
        })
    }

    /// Fetches an expanded result set around a missed query. Not rate limited.
    pub fn on_priority_retrieval(&self, event: &ConversationEvent, now: Timestamp) -> usize {
        debug_assert_eq!(event.kind, EventKind::PriorityRetrieval);
        let k = self.cfg.prefetch_top_k * self.cfg.priority_k_multiplier;
        let key = draw_key(Lane::Priority, event.turn_index, 0);
        match self
            .fetch(&event.text, k, key)
            .and_then(|rs| self.put_all(rs, EntrySource::Priority, now))
        {
            Ok(n) => n,
            Err(e) => {
                log::warn!("priority retrieval for turn {} failed: {e}", event.turn_index);
                0
            }
        }
    }
}

/// Lets numbered tasks through one at a time in index order.
#[derive(Default)]
struct Turnstile {
    next: Mutex<usize>,
    cv: Condvar,
}

struct TurnstileSlot<'a>(&'a Turnstile);

impl Turnstile {
    fn enter(&self, i: usize) -> TurnstileSlot<'_> {
        let mut next = self.next.lock();
        while *next != i {
            self.cv.wait(&mut next);
        }
        TurnstileSlot(self)
    }
}

impl Drop for TurnstileSlot<'_> {
    fn drop(&mut self) {
        *self.0.next.lock() += 1;
        self.0.cv.notify_all();
    }
}
