use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Turns per depth bucket.
pub const BUCKET_TURNS: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    Dual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub scenario_id: String,
    /// Zero-based.
    pub turn_index: u64,
    pub mode: Mode,
    pub hit: bool,
    pub retrieval_latency_ms: f64,
    pub embed_latency_ms: f64,
    pub cache_size: usize,
    pub query: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub scenario_id: String,
    pub queries: usize,
    pub hits: usize,
    pub hit_rate: Option<f64>,
    pub mean_store_latency_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    /// One-based, inclusive.
    pub first_turn: u64,
    pub last_turn: u64,
    pub queries: usize,
    pub hits: usize,
    pub hit_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f32,
    pub queries: usize,
    pub hits: usize,
    pub hit_rate: Option<f64>,
}

/// Aggregates over a set of turn records. Undefined quantities (a rate
/// with an empty denominator, a speedup without hits) are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub scenarios: usize,
    pub dual_queries: usize,
    pub baseline_queries: usize,
    /// Dual queries excluding each scenario's first turn.
    pub warm_queries: usize,
    pub hits: usize,
    pub overall_hit_rate: Option<f64>,
    pub warm_hit_rate: Option<f64>,
    pub mean_store_latency_ms: Option<f64>,
    pub mean_cache_hit_latency_ms: Option<f64>,
    pub speedup: Option<f64>,
    pub total_saved_ms: Option<f64>,
    pub per_scenario: Vec<ScenarioRow>,
    pub per_bucket: Vec<BucketRow>,
    #[serde(default)]
    pub sweep: Option<Vec<SweepRow>>,
}

impl BenchmarkReport {
    /// Mean saving per cache hit.
    pub fn saved_per_hit_ms(&self) -> Option<f64> {
        self.total_saved_ms.filter(|_| self.hits > 0).map(|t| t / self.hits as f64)
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

type Key<'a> = (&'a str, u64);

/// Computes every report figure from raw records.
///
/// When both modes are present they must cover the same (scenario, turn)
/// pairs. A single-mode record set is accepted; the figures that need the
/// other mode are left undefined.
pub fn aggregate(records: &[TurnRecord]) -> Result<BenchmarkReport> {
    let mut dual: BTreeMap<Key<'_>, &TurnRecord> = BTreeMap::new();
    let mut base: BTreeMap<Key<'_>, &TurnRecord> = BTreeMap::new();
    for r in records {
        let side = match r.mode {
            Mode::Dual => &mut dual,
            Mode::Baseline => &mut base,
        };
        if side.insert((&r.scenario_id, r.turn_index), r).is_some() {
            return Err(Error::UnpairedRecords(format!(
                "duplicate {:?} record for {} turn {}",
                r.mode, r.scenario_id, r.turn_index
            )));
        }
    }
    let paired = !dual.is_empty() && !base.is_empty();
    if paired {
        if let Some(k) = dual.keys().find(|k| !base.contains_key(*k)).or_else(|| base.keys().find(|k| !dual.contains_key(*k))) {
            return Err(Error::UnpairedRecords(format!("{} turn {} lacks a partner", k.0, k.1)));
        }
        if let Some((k, _)) = dual.iter().find(|(k, d)| base[*k].query != d.query) {
            return Err(Error::UnpairedRecords(format!("{} turn {} queries differ", k.0, k.1)));
        }
    }

    let scenario_ids: BTreeSet<&str> = records.iter().map(|r| r.scenario_id.as_str()).collect();
    let hits: Vec<&&TurnRecord> = dual.values().filter(|r| r.hit).collect();
    let store_latencies: Vec<f64> = if base.is_empty() {
        dual.values().filter(|r| !r.hit).map(|r| r.retrieval_latency_ms).collect()
    } else {
        base.values().map(|r| r.retrieval_latency_ms).collect()
    };
    let warm_queries = dual.len() - dual.keys().map(|k| k.0).collect::<BTreeSet<_>>().len();

    let mean_store = mean(store_latencies.iter().copied());
    let mean_hit = mean(hits.iter().map(|r| r.retrieval_latency_ms));
    let speedup = match (mean_store, mean_hit) {
        (Some(s), Some(h)) if h > 0.0 => Some(s / h),
        _ => None,
    };
    let total_saved_ms = (!base.is_empty()).then(|| {
        hits.iter()
            .map(|h| base[&(h.scenario_id.as_str(), h.turn_index)].retrieval_latency_ms - h.retrieval_latency_ms)
            .sum()
    });

    let per_scenario = scenario_ids
        .iter()
        .map(|&id| {
            let d: Vec<_> = dual.iter().filter(|(k, _)| k.0 == id).map(|(_, r)| r).collect();
            let h = d.iter().filter(|r| r.hit).count();
            let store = if base.is_empty() {
                mean(d.iter().filter(|r| !r.hit).map(|r| r.retrieval_latency_ms))
            } else {
                mean(base.iter().filter(|(k, _)| k.0 == id).map(|(_, r)| r.retrieval_latency_ms))
            };
            ScenarioRow {
                scenario_id: id.to_string(),
                queries: d.len(),
                hits: h,
                hit_rate: ratio(h, d.len()),
                mean_store_latency_ms: store,
            }
        })
        .collect();

    let mut buckets: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
    for r in dual.values() {
        let b = buckets.entry(r.turn_index / BUCKET_TURNS).or_default();
        b.0 += 1;
        b.1 += usize::from(r.hit);
    }
    let per_bucket = buckets
        .into_iter()
        .map(|(b, (queries, hits))| BucketRow {
            first_turn: b * BUCKET_TURNS + 1,
            last_turn: (b + 1) * BUCKET_TURNS,
            queries,
            hits,
            hit_rate: ratio(hits, queries),
        })
        .collect();

    Ok(BenchmarkReport {
        scenarios: scenario_ids.len(),
        dual_queries: dual.len(),
        baseline_queries: base.len(),
        warm_queries,
        hits: hits.len(),
        overall_hit_rate: ratio(hits.len(), dual.len()),
        warm_hit_rate: ratio(hits.len(), warm_queries),
        mean_store_latency_ms: mean_store,
        mean_cache_hit_latency_ms: mean_hit,
        speedup,
        total_saved_ms,
        per_scenario,
        per_bucket,
        sweep: None,
    })
}
