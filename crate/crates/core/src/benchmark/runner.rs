use std::sync::Arc;

use xxhash_rust::xxh3::xxh3_64_with_seed;

use super::metrics::{Mode, SweepRow, TurnRecord};
use super::scenario::Scenario;
use crate::chunker::RawDocument;
use crate::embedding::Embedder;
use crate::error::{Error, Result};
use crate::predictor::{Predictor, ScriptedPredictor, Strategy};
use crate::router::{ingest, MemoryRouter, RouterConfig, TurnResult};
use crate::store::{FlatStore, VectorStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Baseline,
    Dual,
    /// Baseline then dual for every scenario.
    Paired,
}

impl RunMode {
    fn modes(self) -> &'static [Mode] {
        match self {
            RunMode::Baseline => &[Mode::Baseline],
            RunMode::Dual => &[Mode::Dual],
            RunMode::Paired => &[Mode::Baseline, Mode::Dual],
        }
    }
}

/// Runs scenarios against one ingested store.
///
/// Each scenario gets its own latency seed derived from the configured seed
/// and the scenario id, so scenarios draw different delays while a
/// scenario's baseline and dual runs draw the same ones turn for turn.
pub struct Bench {
    cfg: RouterConfig,
    store: Arc<dyn VectorStore>,
    embedder: Arc<dyn Embedder>,
    parallel: bool,
}

impl Bench {
    pub fn new(cfg: RouterConfig, store: Arc<dyn VectorStore>, embedder: Arc<dyn Embedder>) -> Result<Self> {
        // Fails early on dimension or config problems.
        MemoryRouter::with_embedder(cfg.clone(), store.clone(), embedder.clone())?;
        Ok(Self {
            cfg,
            store,
            embedder,
            parallel: false,
        })
    }

    /// Ingests `docs` into a fresh in-memory store.
    pub fn from_corpus(cfg: RouterConfig, docs: &[RawDocument]) -> Result<Self> {
        cfg.validate()?;
        let embedder = cfg.embedder.build()?;
        let store = Arc::new(FlatStore::new(embedder.dim()));
        ingest(docs, &cfg.chunker, embedder.as_ref(), store.as_ref())?;
        Self::new(cfg, store, embedder)
    }

    /// Runs scenarios on separate threads. Results are identical either way.
    pub fn parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn config(&self) -> &RouterConfig {
        &self.cfg
    }

    pub fn store(&self) -> &Arc<dyn VectorStore> {
        &self.store
    }

    fn router_for(&self, cfg: &RouterConfig, scenario: &Scenario) -> Result<MemoryRouter> {
        let mut cfg = cfg.clone();
        cfg.latency.seed = xxh3_64_with_seed(scenario.scenario_id.as_bytes(), cfg.latency.seed);
        MemoryRouter::with_embedder(cfg, self.store.clone(), self.embedder.clone())
    }

    fn predictor_for(&self, cfg: &RouterConfig, scenario: &Scenario) -> Result<Arc<dyn Predictor>> {
        match cfg.slow.predictor.strategy {
            Strategy::Scripted => Ok(Arc::new(ScriptedPredictor::new(scenario.labels()))),
            _ => cfg.slow.predictor.build(),
        }
    }

    pub fn run_scenario(&self, scenario: &Scenario, mode: Mode) -> Result<Vec<TurnRecord>> {
        self.run_with(&self.cfg, scenario, mode)
    }

    fn run_with(&self, cfg: &RouterConfig, scenario: &Scenario, mode: Mode) -> Result<Vec<TurnRecord>> {
        let router = self.router_for(cfg, scenario)?;
        let record = |t: &TurnResult, query: &str| TurnRecord {
            scenario_id: scenario.scenario_id.clone(),
            turn_index: t.turn_index,
            mode,
            hit: mode == Mode::Dual && t.outcome.is_hit(),
            retrieval_latency_ms: t.outcome.retrieval_latency_ms,
            embed_latency_ms: t.outcome.embed_latency_ms,
            cache_size: t.cache_size_after,
            query: query.to_string(),
        };
        let mut records = Vec::with_capacity(scenario.turns.len());
        match mode {
            Mode::Baseline => {
                let mut session = router.start_baseline();
                for turn in &scenario.turns {
                    records.push(record(&session.user_turn(&turn.query, turn.delay_s)?, &turn.query));
                }
            }
            Mode::Dual => {
                let mut session = router.start_session_with(self.predictor_for(cfg, scenario)?)?;
                for turn in &scenario.turns {
                    records.push(record(&session.user_turn(&turn.query, turn.delay_s)?, &turn.query));
                }
                session.shutdown();
            }
        }
        Ok(records)
    }

    /// All records for `scenarios`, grouped by scenario in input order.
    pub fn run_suite(&self, scenarios: &[Scenario], mode: RunMode) -> Result<Vec<TurnRecord>> {
        self.suite_with(&self.cfg, scenarios, mode)
    }

    fn suite_with(&self, cfg: &RouterConfig, scenarios: &[Scenario], mode: RunMode) -> Result<Vec<TurnRecord>> {
        let one = |s: &Scenario| -> Result<Vec<TurnRecord>> {
            let mut out = Vec::new();
            for &m in mode.modes() {
                out.extend(self.run_with(cfg, s, m)?);
            }
            Ok(out)
        };
        let per_scenario: Vec<Result<Vec<TurnRecord>>> = if self.parallel {
            std::thread::scope(|scope| {
                let handles: Vec<_> = scenarios.iter().map(|s| scope.spawn(move || one(s))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(Error::Protocol("scenario thread panicked".into()))))
                    .collect()
            })
        } else {
            scenarios.iter().map(one).collect()
        };
        let mut records = Vec::new();
        for r in per_scenario {
            records.extend(r?);
        }
        Ok(records)
    }

    /// Dual-mode hit rate of the whole suite at each threshold, same seed
    /// throughout.
    pub fn sweep_threshold(&self, scenarios: &[Scenario], thresholds: &[f32]) -> Result<Vec<SweepRow>> {
        if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::ConfigInvalid(format!("threshold {t} outside [0, 1]")));
        }
        thresholds
            .iter()
            .map(|&threshold| {
                let mut cfg = self.cfg.clone();
                cfg.cache.similarity_threshold = threshold;
                cfg.validate()?;
                let records = self.suite_with(&cfg, scenarios, RunMode::Dual)?;
                let hits = records.iter().filter(|r| r.hit).count();
                Ok(SweepRow {
                    threshold,
                    queries: records.len(),
                    hits,
                    hit_rate: (!records.is_empty()).then(|| hits as f64 / records.len() as f64),
                })
            })
            .collect()
    }
}
