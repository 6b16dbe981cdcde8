//! Session orchestration.
//!
//! A [`MemoryRouter`] owns the shared store and embedder. Each session gets
//! its own clock, cache, bus, latency-injected view of the store, and a
//! background thread running the slow thinker.
//!
//! The background thread only processes an event once the session admits
//! it. Under the real clock a user utterance is admitted right after the
//! foreground cache lookup (so the first turn can never be served by its
//! own prefetch) and every other event on publish. Under the virtual clock
//! nothing is admitted until the inter-turn window, where the session
//! admits everything, waits for the backlog to drain, and only then moves
//! the clock forward. That makes a virtual session a pure function of its
//! inputs.

use std::path::Path;
use std::sync::Arc;
use std::thread::JoinHandle;

use crossbeam_channel::{unbounded, Receiver, Sender};
use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};

use crate::cache::{CacheConfig, CacheStats, SemanticCache};
use crate::chunker::{split_document, ChunkerConfig, RawDocument};
use crate::clock::{Clock, ClockMode, CostModel, Timestamp};
use crate::embedding::{Embedder, EmbedderConfig};
use crate::error::{Error, Result};
use crate::fast_talker::{FastTalker, FastTalkerConfig, Responder, RetrievalOutcome, RetrievalSource, RetrievedChunk, TemplateResponder};
use crate::predictor::Predictor;
use crate::slow_thinker::{PrefetchReport, SlowThinker, SlowThinkerConfig};
use crate::store::{draw_key, DocumentChunk, Lane, LatencyModel, LatencyStore, VectorStore};
use crate::stream::{ConversationEvent, ConversationStream, Envelope, EventKind, Subscription, DEFAULT_WINDOW_CAPACITY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RouterConfig {
    pub cache: CacheConfig,
    pub fast: FastTalkerConfig,
    pub slow: SlowThinkerConfig,
    pub embedder: EmbedderConfig,
    pub latency: LatencyModel,
    pub clock: ClockMode,
    pub cost: CostModel,
    pub chunker: ChunkerConfig,
    pub window_capacity: usize,
}

impl Default for RouterConfig {
    fn default() -> Self {
        Self {
            cache: CacheConfig::default(),
            fast: FastTalkerConfig::default(),
            slow: SlowThinkerConfig::default(),
            embedder: EmbedderConfig::default(),
            latency: LatencyModel::default(),
            clock: ClockMode::default(),
            cost: CostModel::default(),
            chunker: ChunkerConfig::default(),
            window_capacity: DEFAULT_WINDOW_CAPACITY,
        }
    }
}

impl RouterConfig {
    pub fn validate(&self) -> Result<()> {
        self.cache.validate()?;
        self.fast.validate()?;
        self.slow.validate()?;
        self.embedder.validate()?;
        self.latency.validate()?;
        self.chunker.validate()?;
        if self.window_capacity == 0 {
            return Err(Error::ConfigInvalid("window_capacity must be > 0".into()));
        }
        Ok(())
    }

    /// Reads a TOML file, or JSON when the extension is `.json`. Missing
    /// fields take their defaults.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let cfg: Self = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Chunks, embeds, and upserts a corpus. Returns the number of chunks written.
pub fn ingest(
    docs: &[RawDocument],
    chunker: &ChunkerConfig,
    embedder: &dyn Embedder,
    store: &dyn VectorStore,
) -> Result<usize> {
    let mut chunks = Vec::new();
    for doc in docs {
        for piece in split_document(doc, chunker)? {
            if piece.text.trim().is_empty() {
                continue;
            }
            chunks.push(DocumentChunk {
                embedding: embedder.embed(&piece.text)?,
                chunk_id: piece.chunk_id,
                doc_id: piece.doc_id,
                text: piece.text,
            });
        }
    }
    store.upsert(chunks)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurnResult {
    pub turn_index: u64,
    pub outcome: RetrievalOutcome,
    pub response: String,
    /// Cache size once the turn, including its inter-turn window, is over.
    pub cache_size_after: usize,
    pub prefetch_report: Option<PrefetchReport>,
}

pub struct MemoryRouter {
    cfg: RouterConfig,
    store: Arc<dyn VectorStore>,
    embedder: Arc<dyn Embedder>,
    responder: Arc<dyn Responder>,
}

impl MemoryRouter {
    /// Builds the configured embedder and checks it against `store`.
    pub fn new(cfg: RouterConfig, store: Arc<dyn VectorStore>) -> Result<Self> {
        cfg.validate()?;
        let embedder = cfg.embedder.build()?;
        Self::with_embedder(cfg, store, embedder)
    }

    pub fn with_embedder(cfg: RouterConfig, store: Arc<dyn VectorStore>, embedder: Arc<dyn Embedder>) -> Result<Self> {
        cfg.validate()?;
        let dims = [cfg.embedder.dimension, embedder.dim(), store.dim()];
        if dims.iter().any(|&d| d != dims[0]) {
            return Err(Error::ConfigInvalid(format!(
                "embedding dimensions disagree: config {}, embedder {}, store {}",
                dims[0], dims[1], dims[2]
            )));
        }
        Ok(Self {
            cfg,
            store,
            embedder,
            responder: Arc::new(TemplateResponder),
        })
    }

    pub fn with_responder(mut self, responder: Arc<dyn Responder>) -> Self {
        self.responder = responder;
        self
    }

    pub fn config(&self) -> &RouterConfig {
        &self.cfg
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    pub fn store(&self) -> &Arc<dyn VectorStore> {
        &self.store
    }

    fn session_clock(&self) -> Arc<Clock> {
        Arc::new(match self.cfg.clock {
            ClockMode::Real => Clock::real(),
            ClockMode::Virtual => Clock::virtual_at(Timestamp::ZERO),
        })
    }

    fn session_store(&self, clock: &Arc<Clock>) -> Arc<dyn VectorStore> {
        Arc::new(LatencyStore::new(self.store.clone(), self.cfg.latency, clock.clone(), self.cfg.cost))
    }

    /// Starts a session with the configured predictor.
    pub fn start_session(&self) -> Result<Session> {
        let predictor = self.cfg.slow.predictor.build()?;
        self.start_session_with(predictor)
    }

    pub fn start_session_with(&self, predictor: Arc<dyn Predictor>) -> Result<Session> {
        let clock = self.session_clock();
        let store = self.session_store(&clock);
        let cache = Arc::new(SemanticCache::new(self.embedder.dim(), self.cfg.cache)?);
        let bus = Arc::new(ConversationStream::new(self.cfg.window_capacity));
        let gate = Arc::new(Gate::new(clock.is_virtual()));

        let slow = SlowThinker::new(
            self.cfg.slow.clone(),
            self.embedder.clone(),
            store.clone(),
            cache.clone(),
            predictor,
        )
        .with_ordered_puts(clock.is_virtual());
        let fast = FastTalker::new(
            self.cfg.fast,
            self.embedder.clone(),
            store,
            cache.clone(),
            clock.clone(),
            self.cfg.cost,
        )
        .with_bus(bus.clone())
        .with_responder(self.responder.clone());

        let (reports_tx, reports_rx) = unbounded();
        let worker = Worker {
            sub: bus.subscribe(),
            slow,
            bus: bus.clone(),
            gate: gate.clone(),
            clock: clock.clone(),
            reports: reports_tx,
            context_turns: self.cfg.slow.predictor.context_turns,
        };
        let handle = std::thread::Builder::new()
            .name("slow-thinker".into())
            .spawn(move || worker.run())
            .map_err(|e| Error::io("spawning background agent", e))?;

        Ok(Session {
            clock,
            cache,
            bus,
            fast,
            gate,
            worker: Some(handle),
            reports: reports_rx,
            next_turn: 0,
            final_stats: None,
        })
    }

    /// A cache-less session: every turn embeds, searches the store, and
    /// answers. Draws the same latency as a dual session's fallback would.
    pub fn start_baseline(&self) -> BaselineSession {
        let clock = self.session_clock();
        BaselineSession {
            store: self.session_store(&clock),
            clock,
            embedder: self.embedder.clone(),
            responder: self.responder.clone(),
            cfg: self.cfg.clone(),
            next_turn: 0,
        }
    }
}

#[derive(Debug, Default)]
struct GateState {
    /// Events with a lower sequence number may be processed.
    admitted: u64,
    /// Every event with a lower sequence number has been processed.
    processed: u64,
    shutdown: bool,
}

struct Gate {
    hold_all: bool,
    state: Mutex<GateState>,
    cv: Condvar,
}

impl Gate {
    fn new(hold_all: bool) -> Self {
        Self {
            hold_all,
            state: Mutex::new(GateState::default()),
            cv: Condvar::new(),
        }
    }

    fn admit(&self, upto: u64) {
        let mut s = self.state.lock();
        if upto > s.admitted {
            s.admitted = upto;
            self.cv.notify_all();
        }
    }

    /// Blocks until `env` may be processed. False once the session is
    /// shutting down and the event should be dropped.
    fn wait_turn(&self, env: &Envelope) -> bool {
        let held = self.hold_all || env.event.kind == EventKind::UserUtterance;
        let mut s = self.state.lock();
        while held && env.seq >= s.admitted && !s.shutdown {
            self.cv.wait(&mut s);
        }
        !s.shutdown
    }

    fn done(&self, seq: u64) {
        let mut s = self.state.lock();
        s.processed = s.processed.max(seq + 1);
        self.cv.notify_all();
    }

    fn drain(&self, upto: u64) {
        let mut s = self.state.lock();
        while s.processed < upto && !s.shutdown {
            self.cv.wait(&mut s);
        }
    }

    fn shutdown(&self) {
        self.state.lock().shutdown = true;
        self.cv.notify_all();
    }
}

struct Worker {
    sub: Subscription,
    slow: SlowThinker,
    bus: Arc<ConversationStream>,
    gate: Arc<Gate>,
    clock: Arc<Clock>,
    reports: Sender<PrefetchReport>,
    context_turns: usize,
}

impl Worker {
    fn run(self) {
        while let Some(env) = self.sub.next_event() {
            if !self.gate.wait_turn(&env) {
                break;
            }
            let now = self.clock.now();
            match env.event.kind {
                EventKind::UserUtterance => {
                    let context = self.bus.window_context(self.context_turns);
                    let report = self.slow.on_user_utterance(&env.event, &context, now);
                    let _ = self.reports.send(report);
                }
                EventKind::PriorityRetrieval => {
                    self.slow.on_priority_retrieval(&env.event, now);
                }
                EventKind::AgentResponse | EventKind::SilenceDetected | EventKind::TopicShift => {}
            }
            self.gate.done(env.seq);
        }
    }
}

pub struct Session {
    clock: Arc<Clock>,
    cache: Arc<SemanticCache>,
    bus: Arc<ConversationStream>,
    fast: FastTalker,
    gate: Arc<Gate>,
    worker: Option<JoinHandle<()>>,
    reports: Receiver<PrefetchReport>,
    next_turn: u64,
    final_stats: Option<CacheStats>,
}

impl Session {
    pub fn cache(&self) -> &Arc<SemanticCache> {
        &self.cache
    }

    pub fn clock(&self) -> &Arc<Clock> {
        &self.clock
    }

    pub fn bus(&self) -> &Arc<ConversationStream> {
        &self.bus
    }

    /// Runs one conversational turn, then lets `inter_turn_delay_s` pass
    /// while the background agent works.
    pub fn user_turn(&mut self, text: &str, inter_turn_delay_s: f64) -> Result<TurnResult> {
        if self.final_stats.is_some() {
            return Err(Error::BusClosed);
        }
        if text.trim().is_empty() {
            return Err(Error::EmptyQuery);
        }
        let turn = self.next_turn;
        self.next_turn += 1;
        let now = self.clock.now();
        self.cache.evict_expired(now);

        let seq = self
            .bus
            .publish(ConversationEvent::new(EventKind::UserUtterance, turn, text, now))?;
        let virtual_clock = self.clock.is_virtual();
        let gate = &self.gate;
        let handled = self.fast.handle_query_with(text, turn, now, || {
            if !virtual_clock {
                gate.admit(seq + 1);
            }
        });
        let (outcome, response) = match handled {
            Ok(v) => v,
            Err(e) => {
                self.gate.admit(self.bus.published());
                return Err(e);
            }
        };
        self.bus.publish(ConversationEvent::new(EventKind::AgentResponse, turn, response.as_str(), now))?;

        let published = self.bus.published();
        self.gate.admit(published);
        if virtual_clock {
            self.gate.drain(published);
        }
        self.clock.advance(inter_turn_delay_s);

        let prefetch_report = self.reports.try_iter().filter(|r| r.turn_index == turn).last();
        Ok(TurnResult {
            turn_index: turn,
            outcome,
            response,
            cache_size_after: self.cache.len(),
            prefetch_report,
        })
    }

    /// Closes the bus, stops the background agent, and returns the final
    /// cache statistics. Work already in progress finishes; queued events
    /// are dropped. Calling it again returns the same snapshot.
    pub fn shutdown(&mut self) -> CacheStats {
        if let Some(stats) = &self.final_stats {
            return stats.clone();
        }
        self.bus.close();
        self.gate.shutdown();
        if let Some(handle) = self.worker.take() {
            if handle.join().is_err() {
                log::error!("background agent panicked");
            }
        }
        let stats = self.cache.stats();
        self.final_stats = Some(stats.clone());
        stats
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Plain retrieval-augmented answering with no cache and no background agent.
pub struct BaselineSession {
    clock: Arc<Clock>,
    store: Arc<dyn VectorStore>,
    embedder: Arc<dyn Embedder>,
    responder: Arc<dyn Responder>,
    cfg: RouterConfig,
    next_turn: u64,
}

impl BaselineSession {
    pub fn clock(&self) -> &Arc<Clock> {
        &self.clock
    }

    pub fn user_turn(&mut self, text: &str, inter_turn_delay_s: f64) -> Result<TurnResult> {
        if text.trim().is_empty() {
            return Err(Error::EmptyQuery);
        }
        let turn = self.next_turn;
        self.next_turn += 1;
        let cost = self.cfg.cost;
        let (query, embed_latency_ms) = self.clock.timed(cost.embed_ms, || self.embedder.embed(text));
        let query = query.map_err(|e| Error::EmbeddingFailed(e.to_string()))?;
        let resp = self
            .store
            .search_keyed(&query, self.cfg.fast.k, draw_key(Lane::Foreground, turn, 0))?;
        let chunks: Vec<RetrievedChunk> = resp
            .results
            .into_iter()
            .map(|r| RetrievedChunk {
                chunk: r.chunk,
                similarity: r.score,
            })
            .collect();
        let context = &chunks[..chunks.len().min(self.cfg.fast.max_context_chunks)];
        let (response, _) = self.clock.timed(cost.respond_ms, || self.responder.respond(text, context));
        let mut degraded = false;
        let response = response.unwrap_or_else(|e| {
            log::warn!("responder failed on baseline turn {turn}: {e}");
            degraded = true;
            TemplateResponder.respond(text, context).unwrap_or_default()
        });
        self.clock.advance(inter_turn_delay_s);
        Ok(TurnResult {
            turn_index: turn,
            outcome: RetrievalOutcome {
                source: RetrievalSource::StoreFallback,
                chunks,
                retrieval_latency_ms: resp.latency_ms,
                embed_latency_ms,
                degraded,
            },
            response,
            cache_size_after: 0,
            prefetch_report: None,
        })
    }
}
