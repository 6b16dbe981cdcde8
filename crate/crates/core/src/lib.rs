//! Dual-agent retrieval for voice assistants.
//!
//! A background agent watches the conversation, predicts the next few
//! questions, and prefetches matching chunks from the vector store into a
//! semantic cache. A foreground agent answers each turn from that cache and
//! only falls back to the store on a miss.

pub mod benchmark;
pub mod cache;
pub mod chunker;
pub mod clock;
pub mod embedding;
pub mod error;
pub mod fast_talker;
mod http;
pub mod openai;
pub mod predictor;
pub mod router;
pub mod slow_thinker;
pub mod store;
pub mod stream;
pub mod text;

pub use cache::{CacheConfig, CacheEntry, CacheHit, CacheStats, EntrySource, PutOutcome, SemanticCache};
pub use chunker::{split_document, ChunkerConfig, RawDocument, TextChunk};
pub use clock::{Clock, ClockMode, CostModel, Timestamp};
pub use embedding::{cosine, normalize, Embedder, EmbedderConfig, HashEmbedder, RemoteEmbedder, UnitVector};
pub use error::{Error, Result};
pub use store::{DocumentChunk, FlatStore, LatencyModel, LatencyStore, SearchResponse, SearchResult, VectorStore};
pub use fast_talker::{format_context, FastTalker, FastTalkerConfig, Responder, RetrievalOutcome, RetrievalSource, RetrievedChunk, TemplateResponder};
pub use predictor::{KeywordPredictor, Prediction, Predictor, PredictorConfig, ScriptedPredictor, Strategy};
pub use router::{ingest, BaselineSession, MemoryRouter, RouterConfig, Session, TurnResult};
pub use slow_thinker::{PrefetchReport, SlowThinker, SlowThinkerConfig};
pub use stream::{ConversationEvent, ConversationStream, EventKind, Role, Turn};
