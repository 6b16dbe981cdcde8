use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use reqwest::blocking::Client;
use reqwest::Method;
use serde::{Deserialize, Serialize};
use serde_json::json;
use xxhash_rust::xxh3::xxh3_64;

use super::{DocumentChunk, SearchResponse, SearchResult, VectorStore};
use crate::embedding::{check_dim, normalize, Embedder, UnitVector};
use crate::error::{Error, Result};
use crate::http::{build_client, send_json, Auth};
use crate::openai::DEFAULT_TIMEOUT_MS;

pub const VDB_API_KEY_ENV: &str = "MEMROUTER_VDB_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteStoreConfig {
    pub endpoint: String,
    pub collection: String,
    pub dimension: usize,
    pub timeout_ms: u64,
}

impl Default for RemoteStoreConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:6333".into(),
            collection: "memrouter".into(),
            dimension: crate::embedding::REMOTE_DIMENSION,
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }
}

#[derive(Deserialize)]
struct SearchReply {
    result: Vec<ScoredPoint>,
}

#[derive(Deserialize)]
struct ScoredPoint {
    id: serde_json::Value,
    score: f64,
    #[serde(default)]
    payload: Option<Payload>,
    #[serde(default)]
    vector: Option<Vec<f64>>,
}

#[derive(Deserialize)]
struct Payload {
    text: String,
    doc_id: String,
    #[serde(default)]
    chunk_id: Option<String>,
}

/// Client for a Qdrant-compatible search API.
///
/// Searches ask for stored vectors so results can be cached under their own
/// embeddings. Servers that omit them get the payload text re-embedded with
/// the fallback embedder, if one is configured.
pub struct RemoteStore {
    http: Client,
    cfg: RemoteStoreConfig,
    api_key: Option<String>,
    embedder: Option<Arc<dyn Embedder>>,
    upserted: AtomicUsize,
}

impl RemoteStore {
    pub fn new(cfg: RemoteStoreConfig) -> Result<Self> {
        if cfg.dimension == 0 {
            return Err(Error::ConfigInvalid("remote store dimension must be > 0".into()));
        }
        Ok(Self {
            http: build_client(cfg.timeout_ms)?,
            api_key: std::env::var(VDB_API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            cfg: RemoteStoreConfig {
                endpoint: cfg.endpoint.trim_end_matches('/').to_string(),
                ..cfg
            },
            embedder: None,
            upserted: AtomicUsize::new(0),
        })
    }

    pub fn with_embedder(mut self, embedder: Arc<dyn Embedder>) -> Self {
        self.embedder = Some(embedder);
        self
    }

    fn auth(&self) -> Auth<'_> {
        match &self.api_key {
            Some(key) => Auth::Header("api-key", key),
            None => Auth::None,
        }
    }

    fn url(&self, suffix: &str) -> String {
        format!("{}/collections/{}{suffix}", self.cfg.endpoint, self.cfg.collection)
    }

    /// Creates the collection with cosine distance.
    pub fn create_collection(&self) -> Result<()> {
        let body = json!({ "vectors": { "size": self.cfg.dimension, "distance": "Cosine" } });
        let _: serde_json::Value = send_json(&self.http, Method::PUT, &self.url(""), self.auth(), &body)?;
        Ok(())
    }

    fn point_to_result(&self, p: ScoredPoint, latency_ms: f64) -> Result<SearchResult> {
        if !p.score.is_finite() || !(-1.0..=1.0).contains(&p.score) {
            return Err(Error::Protocol(format!("score {} outside [-1, 1]", p.score)));
        }
        let payload = p
            .payload
            .ok_or_else(|| Error::Protocol("point without payload".into()))?;
        let embedding = match p.vector {
            Some(v) => {
                check_dim(self.cfg.dimension, v.len())
                    .map_err(|e| Error::Protocol(e.to_string()))?;
                normalize(&v)?
            }
            None => match &self.embedder {
                Some(e) => e.embed(&payload.text)?,
                None => return Err(Error::Protocol("point without vector".into())),
            },
        };
        let chunk_id = payload.chunk_id.unwrap_or_else(|| match &p.id {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        });
        Ok(SearchResult {
            chunk: DocumentChunk {
                chunk_id,
                doc_id: payload.doc_id,
                text: payload.text,
                embedding,
            },
            score: p.score as f32,
            latency_ms,
        })
    }
}

/// Stable numeric point id for a chunk id.
fn point_id(chunk_id: &str) -> u64 {
    xxh3_64(chunk_id.as_bytes()) >> 1
}

impl VectorStore for RemoteStore {
    fn dim(&self) -> usize {
        self.cfg.dimension
    }

    /// Points written through this client; the remote count is not queried.
    fn len(&self) -> usize {
        self.upserted.load(Ordering::SeqCst)
    }

    fn upsert(&self, chunks: Vec<DocumentChunk>) -> Result<usize> {
        for c in &chunks {
            check_dim(self.cfg.dimension, c.embedding.dim())?;
        }
        let points: Vec<_> = chunks
            .iter()
            .map(|c| {
                json!({
                    "id": point_id(&c.chunk_id),
                    "vector": c.embedding.as_slice(),
                    "payload": { "text": c.text, "doc_id": c.doc_id, "chunk_id": c.chunk_id },
                })
            })
            .collect();
        let url = format!("{}?wait=true", self.url("/points"));
        let _: serde_json::Value =
            send_json(&self.http, Method::PUT, &url, self.auth(), &json!({ "points": points }))?;
        self.upserted.fetch_add(chunks.len(), Ordering::SeqCst);
        Ok(chunks.len())
    }

    fn search(&self, query: &UnitVector, k: usize) -> Result<SearchResponse> {
        check_dim(self.cfg.dimension, query.dim())?;
        let body = json!({
            "vector": query.as_slice(),
            "limit": k,
            "with_payload": true,
            "with_vector": true,
        });
        let start = Instant::now();
        let reply: SearchReply =
            send_json(&self.http, Method::POST, &self.url("/points/search"), self.auth(), &body)?;
        let latency_ms = start.elapsed().as_secs_f64() * 1e3;
        let results = reply
            .result
            .into_iter()
            .map(|p| self.point_to_result(p, latency_ms))
            .collect::<Result<Vec<_>>>()?;
        Ok(SearchResponse { results, latency_ms })
    }
}
