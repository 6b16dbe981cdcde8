//! The foreground agent: cache first, store on a miss.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cache::{EntrySource, SemanticCache};
use crate::clock::{Clock, CostModel, Timestamp};
use crate::embedding::Embedder;
use crate::error::{Error, Result};
use crate::openai::{ChatMessage, OpenAiClient, DEFAULT_TIMEOUT_MS};
use crate::store::{draw_key, DocumentChunk, Lane, VectorStore};
use crate::stream::{ConversationEvent, ConversationStream, EventKind};

pub const RESPONDER_API_KEY_ENV: &str = "MEMROUTER_LLM_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FastTalkerConfig {
    pub max_context_chunks: usize,
    pub fallback_enabled: bool,
    pub cache_on_miss: bool,
    /// Result count for both the cache lookup and the store fallback.
    pub k: usize,
}

impl Default for FastTalkerConfig {
    fn default() -> Self {
        Self {
            max_context_chunks: 10,
            fallback_enabled: true,
            cache_on_miss: true,
            k: 10,
        }
    }
}

impl FastTalkerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_context_chunks == 0 || self.k == 0 {
            return Err(Error::ConfigInvalid("max_context_chunks and k must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RetrievalSource {
    CacheHit,
    StoreFallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedChunk {
    pub chunk: DocumentChunk,
    pub similarity: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalOutcome {
    pub source: RetrievalSource,
    /// Best first.
    pub chunks: Vec<RetrievedChunk>,
    /// Cache lookup time on a hit, store search time on a miss.
    pub retrieval_latency_ms: f64,
    pub embed_latency_ms: f64,
    /// The answer was produced without the context it should have had.
    pub degraded: bool,
}

impl RetrievalOutcome {
    pub fn is_hit(&self) -> bool {
        self.source == RetrievalSource::CacheHit
    }
}

/// Numbered passages, one per chunk, separated by blank lines.
pub fn format_context(chunks: &[RetrievedChunk]) -> String {
    chunks
        .iter()
        .enumerate()
        .map(|(i, c)| format!("[{}] ({}) {}", i + 1, c.chunk.doc_id, c.chunk.text))
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub trait Responder: Send + Sync {
    fn respond(&self, query: &str, context: &[RetrievedChunk]) -> Result<String>;
}

/// Answers from the passages alone, without a model.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateResponder;

pub const NO_CONTEXT_RESPONSE: &str = "Sorry, I don't have information on that right now.";

fn first_sentence(text: &str) -> &str {
    let text = text.trim();
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        let at_break = chars.peek().is_none_or(|&(_, n)| n.is_whitespace());
        if matches!(c, '.' | '!' | '?') && at_break {
            return &text[..i + c.len_utf8()];
        }
        if c == '\n' {
            return text[..i].trim_end();
        }
    }
    text
}

impl Responder for TemplateResponder {
    fn respond(&self, _query: &str, context: &[RetrievedChunk]) -> Result<String> {
        let Some(top) = context.first() else {
            return Ok(NO_CONTEXT_RESPONSE.to_string());
        };
        let mut docs: Vec<&str> = Vec::new();
        for c in context {
            if !docs.contains(&c.chunk.doc_id.as_str()) {
                docs.push(&c.chunk.doc_id);
            }
        }
        Ok(format!(
            "Based on {} passages about {}: {}",
            context.len(),
            docs.join(", "),
            first_sentence(&top.chunk.text)
        ))
    }
}

/// Answers through a chat-completions model.
pub struct ChatResponder {
    client: OpenAiClient,
    model: String,
    temperature: f64,
}

impl ChatResponder {
    pub fn new(endpoint: &str, model: &str, temperature: f64) -> Result<Self> {
        Ok(Self {
            client: OpenAiClient::new(endpoint, RESPONDER_API_KEY_ENV, DEFAULT_TIMEOUT_MS)?,
            model: model.to_string(),
            temperature,
        })
    }
}

impl Responder for ChatResponder {
    fn respond(&self, query: &str, context: &[RetrievedChunk]) -> Result<String> {
        let messages = [
            ChatMessage::system(
                "You are a concise voice support agent. Answer from the numbered passages. \
                 If they do not cover the question, say so briefly.",
            ),
            ChatMessage::user(format!("Passages:\n{}\n\nQuestion: {query}", format_context(context))),
        ];
        self.client.chat(&self.model, self.temperature, &messages)
    }
}

pub struct FastTalker {
    cfg: FastTalkerConfig,
    embedder: Arc<dyn Embedder>,
    store: Arc<dyn VectorStore>,
    cache: Arc<SemanticCache>,
    clock: Arc<Clock>,
    cost: CostModel,
    bus: Option<Arc<ConversationStream>>,
    responder: Arc<dyn Responder>,
}

impl FastTalker {
    pub fn new(
        cfg: FastTalkerConfig,
        embedder: Arc<dyn Embedder>,
        store: Arc<dyn VectorStore>,
        cache: Arc<SemanticCache>,
        clock: Arc<Clock>,
        cost: CostModel,
    ) -> Self {
        Self {
            cfg,
            embedder,
            store,
            cache,
            clock,
            cost,
            bus: None,
            responder: Arc::new(TemplateResponder),
        }
    }

    /// Bus on which misses are announced as priority retrievals.
    pub fn with_bus(mut self, bus: Arc<ConversationStream>) -> Self {
        self.bus = Some(bus);
        self
    }

    pub fn with_responder(mut self, responder: Arc<dyn Responder>) -> Self {
        self.responder = responder;
        self
    }

    pub fn config(&self) -> &FastTalkerConfig {
        &self.cfg
    }

    pub fn handle_query(&self, text: &str, turn_index: u64, now: Timestamp) -> Result<(RetrievalOutcome, String)> {
        self.handle_query_with(text, turn_index, now, || {})
    }

    /// Like [`handle_query`](Self::handle_query); `after_lookup` runs as soon
    /// as the cache has been consulted.
    pub fn handle_query_with(
        &self,
        text: &str,
        turn_index: u64,
        now: Timestamp,
        after_lookup: impl FnOnce(),
    ) -> Result<(RetrievalOutcome, String)> {
        if text.trim().is_empty() {
            return Err(Error::EmptyQuery);
        }
        let (query, embed_latency_ms) = self.clock.timed(self.cost.embed_ms, || self.embedder.embed(text));
        let query = query.map_err(|e| match e {
            Error::EmbeddingFailed(_) => e,
            other => Error::EmbeddingFailed(other.to_string()),
        })?;

        let threshold = self.cache.config().similarity_threshold;
        let modeled = self.cost.scan_ms(self.cache.len(), self.cache.dim());
        let (hits, lookup_ms) = self
            .clock
            .timed(modeled, || self.cache.get(&query, self.cfg.k, threshold, now));
        let hits = hits?;
        after_lookup();

        let mut outcome = if !hits.is_empty() {
            RetrievalOutcome {
                source: RetrievalSource::CacheHit,
                chunks: hits
                    .into_iter()
                    .map(|h| RetrievedChunk {
                        chunk: h.entry.chunk,
                        similarity: h.similarity,
                    })
                    .collect(),
                retrieval_latency_ms: lookup_ms,
                embed_latency_ms,
                degraded: false,
            }
        } else {
            self.on_miss(text, &query, turn_index, now, embed_latency_ms)
        };
        outcome.chunks.truncate(self.cfg.k);

        let context = &outcome.chunks[..outcome.chunks.len().min(self.cfg.max_context_chunks)];
        let (response, _) = self.clock.timed(self.cost.respond_ms, || self.responder.respond(text, context));
        let response = response.unwrap_or_else(|e| {
            log::warn!("responder failed on turn {turn_index}: {e}");
            outcome.degraded = true;
            TemplateResponder.respond(text, context).unwrap_or_default()
        });
        Ok((outcome, response))
    }

    fn on_miss(
        &self,
        text: &str,
        query: &crate::embedding::UnitVector,
        turn_index: u64,
        now: Timestamp,
        embed_latency_ms: f64,
    ) -> RetrievalOutcome {
        if let Some(bus) = &self.bus {
            let event = ConversationEvent::new(EventKind::PriorityRetrieval, turn_index, text, now);
            if let Err(e) = bus.publish(event) {
                log::debug!("priority signal for turn {turn_index} dropped: {e}");
            }
        }
        let mut outcome = RetrievalOutcome {
            source: RetrievalSource::StoreFallback,
            chunks: Vec::new(),
            retrieval_latency_ms: 0.0,
            embed_latency_ms,
            degraded: true,
        };
        if !self.cfg.fallback_enabled {
            return outcome;
        }
        match self.store.search_keyed(query, self.cfg.k, draw_key(Lane::Foreground, turn_index, 0)) {
            Ok(resp) => {
                outcome.retrieval_latency_ms = resp.latency_ms;
                outcome.degraded = false;
                for r in resp.results {
                    if self.cfg.cache_on_miss {
                        if let Err(e) = self.cache.put(r.chunk.clone(), r.score, EntrySource::MissFallback, now) {
                            log::warn!("cache-on-miss put failed: {e}");
                        }
                    }
                    outcome.chunks.push(RetrievedChunk {
                        chunk: r.chunk,
                        similarity: r.score,
                    });
                }
            }
            Err(e) => log::warn!("store fallback for turn {turn_index} failed: {e}"),
        }
        outcome
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::CacheConfig;
    use crate::embedding::{normalize, HashEmbedder};
    use crate::store::FlatStore;

    fn rc(doc: &str, text: &str, sim: f32) -> RetrievedChunk {
        RetrievedChunk {
            chunk: DocumentChunk {
                chunk_id: format!("{doc}#0"),
                doc_id: doc.into(),
                text: text.into(),
                embedding: normalize(&[1.0]).unwrap(),
            },
            similarity: sim,
        }
    }

    struct Rig {
        talker: FastTalker,
        store: Arc<FlatStore>,
        cache: Arc<SemanticCache>,
        bus: Arc<ConversationStream>,
    }

    fn rig(cfg: FastTalkerConfig) -> Rig {
        let embedder: Arc<dyn Embedder> = Arc::new(HashEmbedder::new(256, 0));
        let store = Arc::new(FlatStore::new(256));
        let texts = [
            ("pricing", "Growth plan costs forty dollars per seat monthly. Annual billing saves more."),
            ("api", "The contacts endpoint lists contact records with paging."),
            ("security", "SAML single sign on works with Okta and Azure."),
        ];
        store
            .upsert(
                texts
                    .iter()
                    .map(|(doc, text)| DocumentChunk {
                        chunk_id: format!("{doc}#0"),
                        doc_id: doc.to_string(),
                        text: text.to_string(),
                        embedding: embedder.embed(text).unwrap(),
                    })
                    .collect(),
            )
            .unwrap();
        let cache = Arc::new(SemanticCache::new(256, CacheConfig::default()).unwrap());
        let bus = Arc::new(ConversationStream::default());
        let clock = Arc::new(Clock::virtual_at(Timestamp::ZERO));
        let talker = FastTalker::new(cfg, embedder, store.clone(), cache.clone(), clock, CostModel::default())
            .with_bus(bus.clone());
        Rig { talker, store, cache, bus }
    }

    #[test]
    fn context_formatting() {
        assert_eq!(format_context(&[]), "");
        assert_eq!(format_context(&[rc("pricing", "Plans start at $12.", 0.9)]), "[1] (pricing) Plans start at $12.");
        let two = format_context(&[rc("a", "first", 0.9), rc("b", "second", 0.5)]);
        assert_eq!(two, "[1] (a) first\n\n[2] (b) second");
    }

    #[test]
    fn template_response_uses_top_chunk() {
        let ctx = [rc("pricing", "Plans start at $12.50 per seat. Teams save more.", 0.9), rc("faq", "x", 0.4)];
        assert_eq!(
            TemplateResponder.respond("q", &ctx).unwrap(),
            "Based on 2 passages about pricing, faq: Plans start at $12.50 per seat."
        );
        assert_eq!(TemplateResponder.respond("q", &[]).unwrap(), NO_CONTEXT_RESPONSE);
    }

    #[test]
    fn first_sentence_stops_at_line_breaks() {
        assert_eq!(first_sentence("Title line\nBody text."), "Title line");
        assert_eq!(first_sentence("No terminator"), "No terminator");
        assert_eq!(first_sentence("v1.2 shipped! Then more"), "v1.2 shipped!");
    }

    #[test]
    fn prewarmed_cache_hits_without_store_call() {
        let r = rig(FastTalkerConfig::default());
        let text = "SAML single sign on works with Okta and Azure.";
        let chunk = r.store.get("security#0").unwrap();
        r.cache.put(chunk, 1.0, EntrySource::Prediction, Timestamp::ZERO).unwrap();
        let sub = r.bus.subscribe();
        let (out, resp) = r.talker.handle_query(text, 0, Timestamp::ZERO).unwrap();
        assert!(out.is_hit());
        assert_eq!(r.store.search_count(), 0);
        assert!(sub.try_next().is_none());
        assert!(resp.contains("security"));
        assert_eq!(out.retrieval_latency_ms, CostModel::default().scan_ms(1, 256));
    }

    #[test]
    fn miss_falls_back_caches_and_signals_once() {
        let r = rig(FastTalkerConfig::default());
        let sub = r.bus.subscribe();
        let q = "contacts endpoint paging";
        let (out, _) = r.talker.handle_query(q, 4, Timestamp::ZERO).unwrap();
        assert_eq!(out.source, RetrievalSource::StoreFallback);
        assert_eq!(r.store.search_count(), 1);
        assert_eq!(r.cache.len(), 3);
        let ev = sub.try_next().unwrap().event;
        assert_eq!((ev.kind, ev.turn_index, ev.text.as_str()), (EventKind::PriorityRetrieval, 4, q));
        assert!(sub.try_next().is_none());
        assert_eq!(out.chunks[0].chunk.chunk_id, "api#0");
        assert!(out.chunks.windows(2).all(|w| w[0].similarity >= w[1].similarity));
    }

    #[test]
    fn repeated_query_misses_then_hits() {
        let r = rig(FastTalkerConfig::default());
        let q = "The contacts endpoint lists contact records with paging.";
        let (first, _) = r.talker.handle_query(q, 0, Timestamp::ZERO).unwrap();
        let (second, _) = r.talker.handle_query(q, 1, Timestamp::ZERO).unwrap();
        assert!(!first.is_hit() && second.is_hit());
        assert!((second.chunks[0].similarity - 1.0).abs() < 1e-6);
        assert_eq!(r.store.search_count(), 1);
    }

    #[test]
    fn disabled_fallback_answers_without_context() {
        let r = rig(FastTalkerConfig { fallback_enabled: false, ..Default::default() });
        let (out, resp) = r.talker.handle_query("anything at all", 0, Timestamp::ZERO).unwrap();
        assert!(out.degraded && out.chunks.is_empty());
        assert_eq!(resp, NO_CONTEXT_RESPONSE);
        assert_eq!(r.store.search_count(), 0);
    }

    #[test]
    fn blank_query_is_rejected() {
        let r = rig(FastTalkerConfig::default());
        assert!(matches!(r.talker.handle_query("  ", 0, Timestamp::ZERO), Err(Error::EmptyQuery)));
    }
}
