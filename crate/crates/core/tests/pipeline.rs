use std::collections::HashSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use memrouter::benchmark::{fixture_dir, load_scenarios, render_report, aggregate, Bench, Format, Mode, RunMode};
use memrouter::chunker::load_corpus_dir;
use memrouter::{
    ClockMode, Embedder, Error, FlatStore, LatencyModel, MemoryRouter, RouterConfig, ScriptedPredictor, Strategy,
    VectorStore,
};

fn corpus_store(cfg: &RouterConfig) -> (Arc<FlatStore>, Arc<dyn Embedder>) {
    let docs = load_corpus_dir(fixture_dir().join("kb")).unwrap();
    let embedder = cfg.embedder.build().unwrap();
    let store = Arc::new(FlatStore::new(embedder.dim()));
    memrouter::ingest(&docs, &cfg.chunker, embedder.as_ref(), store.as_ref()).unwrap();
    (store, embedder)
}

fn scripted() -> RouterConfig {
    let mut cfg = RouterConfig::default();
    cfg.slow.predictor.strategy = Strategy::Scripted;
    cfg
}

#[test]
fn fixture_corpus_shape() {
    let docs = load_corpus_dir(fixture_dir().join("kb")).unwrap();
    assert_eq!(docs.len(), 12);
    let (store, _) = corpus_store(&RouterConfig::default());
    let chunks = store.chunks();
    assert!((70..=85).contains(&chunks.len()), "{} chunks", chunks.len());
    assert!(chunks.iter().all(|c| c.text.chars().count() <= 512));
    let ids: HashSet<_> = chunks.iter().map(|c| &c.chunk_id).collect();
    assert_eq!(ids.len(), chunks.len());
    let scenarios = load_scenarios(fixture_dir().join("scenarios")).unwrap();
    assert_eq!(scenarios.len(), 10);
    assert!(scenarios.iter().all(|s| s.turns.len() == 20));
}

/// After each turn, the store's top-k results for every predicted topic are
/// in the cache.
#[test]
fn predicted_topics_are_prefetched() {
    let cfg = scripted();
    let (store, embedder) = corpus_store(&cfg);
    let scenario = &load_scenarios(fixture_dir().join("scenarios/s02_pricing_deep_dive.json")).unwrap()[0];
    let router = MemoryRouter::with_embedder(cfg.clone(), store.clone(), embedder.clone()).unwrap();
    let mut session = router.start_session_with(Arc::new(ScriptedPredictor::new(scenario.labels()))).unwrap();
    for turn in &scenario.turns {
        let result = session.user_turn(&turn.query, turn.delay_s).unwrap();
        let cached: HashSet<String> = session.cache().entries().into_iter().map(|e| e.chunk.chunk_id).collect();
        for label in &turn.topic_labels {
            let top = store.search(&embedder.embed(label).unwrap(), cfg.slow.prefetch_top_k).unwrap();
            for r in top.results {
                assert!(cached.contains(&r.chunk.chunk_id), "turn {} label {label:?}", result.turn_index);
            }
        }
        let report = result.prefetch_report.expect("report for every turn");
        assert_eq!(report.predictions_made, turn.topic_labels.len());
    }
}

#[test]
fn first_turn_misses_then_prefetch_hits() {
    let cfg = scripted();
    let (store, embedder) = corpus_store(&cfg);
    let router = MemoryRouter::with_embedder(cfg, store, embedder).unwrap();
    let labels = vec![vec!["Enterprise plan pricing per user, billed annually".to_string()]];
    let mut session = router.start_session_with(Arc::new(ScriptedPredictor::new(labels))).unwrap();
    let first = session.user_turn("What does the Growth plan cost per user per month?", 4.0).unwrap();
    assert!(!first.outcome.is_hit());
    assert!(first.outcome.retrieval_latency_ms >= 97.0);
    let second = session.user_turn("What does the Enterprise plan cost per user?", 4.0).unwrap();
    assert!(second.outcome.is_hit());
    assert!(second.outcome.retrieval_latency_ms < 1.0);
    assert!(second.outcome.chunks.iter().any(|c| c.chunk.chunk_id.starts_with("pricing")));
    assert!(second.response.contains("pricing"), "{}", second.response);
}

#[test]
fn real_clock_session_runs_concurrently() {
    let mut cfg = scripted();
    cfg.clock = ClockMode::Real;
    cfg.latency = LatencyModel::uniform(5.0, 15.0, 3);
    let (store, embedder) = corpus_store(&cfg);
    let router = MemoryRouter::with_embedder(cfg, store, embedder).unwrap();
    let labels = vec![
        vec!["annual billing discount, 20 percent".to_string()],
        vec!["discounts for nonprofits and schools".to_string()],
    ];
    let mut session = router.start_session_with(Arc::new(ScriptedPredictor::new(labels))).unwrap();
    let t0 = Instant::now();
    assert!(!session.user_turn("How much does NovaCRM cost?", 0.5).unwrap().outcome.is_hit());
    let hit = session.user_turn("Is there a discount for annual billing?", 0.5).unwrap();
    assert!(hit.outcome.is_hit());
    assert!(t0.elapsed() >= Duration::from_millis(1000));
    let stats = session.shutdown();
    assert!(stats.size > 0);
    assert_eq!(session.shutdown(), stats);
    assert!(matches!(session.user_turn("again", 0.0), Err(Error::BusClosed)));
}

#[test]
fn shutdown_during_prefetch_is_bounded() {
    let mut cfg = scripted();
    cfg.clock = ClockMode::Real;
    cfg.latency = LatencyModel::uniform(150.0, 200.0, 1);
    let (store, embedder) = corpus_store(&cfg);
    let router = MemoryRouter::with_embedder(cfg, store, embedder).unwrap();
    let labels = vec![vec!["webhooks".into(), "pagination".into(), "rate limits".into()]];
    let mut session = router.start_session_with(Arc::new(ScriptedPredictor::new(labels))).unwrap();
    session.user_turn("How does API authentication work?", 0.0).unwrap();
    let t0 = Instant::now();
    session.shutdown();
    // direct search plus one parallel prefetch round at most
    assert!(t0.elapsed() < Duration::from_millis(1500), "{:?}", t0.elapsed());
    assert!(session.bus().is_closed());
}

#[test]
fn benchmark_runs_are_reproducible() {
    let docs = load_corpus_dir(fixture_dir().join("kb")).unwrap();
    let scenarios = load_scenarios(fixture_dir().join("scenarios")).unwrap();
    let bench = Bench::from_corpus(scripted(), &docs).unwrap();
    let a = bench.run_suite(&scenarios, RunMode::Paired).unwrap();
    let b = Bench::from_corpus(scripted(), &docs).unwrap().parallel(true).run_suite(&scenarios, RunMode::Paired).unwrap();
    assert_eq!(a, b);
    let ra = render_report(&aggregate(&a).unwrap(), &a, Format::Machine).unwrap();
    let rb = render_report(&aggregate(&b).unwrap(), &b, Format::Machine).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn seed_changes_latency_not_hits() {
    let docs = load_corpus_dir(fixture_dir().join("kb")).unwrap();
    let scenarios = load_scenarios(fixture_dir().join("scenarios/s03_api_integration.json")).unwrap();
    let run = |seed| {
        let mut cfg = scripted();
        cfg.latency.seed = seed;
        Bench::from_corpus(cfg, &docs).unwrap().run_suite(&scenarios, RunMode::Paired).unwrap()
    };
    let (a, b) = (run(1), run(2));
    let hits = |r: &[memrouter::benchmark::TurnRecord]| r.iter().map(|t| t.hit).collect::<Vec<_>>();
    assert_eq!(hits(&a), hits(&b));
    assert_ne!(a, b);
    for r in a.iter().filter(|r| r.mode == Mode::Baseline) {
        assert!((97.0..=308.0).contains(&r.retrieval_latency_ms), "{}", r.retrieval_latency_ms);
    }
}
