use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use memrouter::benchmark::{
    aggregate, fixture_dir, load_scenarios, render_report, Bench, Format, MachineReport, RunMode, DEFAULT_SWEEP,
};
use memrouter::chunker::load_corpus_dir;
use memrouter::store::{RemoteStore, RemoteStoreConfig};
use memrouter::{ingest, FlatStore, RouterConfig, Strategy, VectorStore};

#[derive(Parser)]
#[command(name = "memrouter", version, about = "Dual-agent retrieval memory router")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Chunk, embed and index a directory of .txt documents.
    Ingest {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long, value_enum, default_value_t = StoreKind::Local)]
        store: StoreKind,
        /// Router config (TOML or JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Remote store base URL.
        #[arg(long, default_value = "http://localhost:6333")]
        endpoint: String,
        #[arg(long, default_value = "memrouter")]
        collection: String,
    },
    /// Run scenarios in baseline, dual-agent or paired mode.
    Bench {
        #[arg(long, default_value_os_t = fixture_dir().join("scenarios"))]
        scenarios: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Paired)]
        mode: ModeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_os_t = fixture_dir().join("kb"))]
        kb: PathBuf,
        /// Overrides the configured predictor strategy.
        #[arg(long, value_enum)]
        predictor: Option<PredictorArg>,
        /// Run scenarios on separate threads.
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FormatArg::Text)]
        format: FormatArg,
    },
    /// Paired run plus the dual-agent hit rate at each similarity threshold.
    Sweep {
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SWEEP)]
        thresholds: Vec<f32>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_os_t = fixture_dir().join("scenarios"))]
        scenarios: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_os_t = fixture_dir().join("kb"))]
        kb: PathBuf,
        #[arg(long, value_enum)]
        predictor: Option<PredictorArg>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FormatArg::Text)]
        format: FormatArg,
    },
    /// Re-render a saved JSON report.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::Text)]
        format: FormatArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StoreKind {
    Local,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Baseline,
    Dual,
    Paired,
}

#[derive(Clone, Copy, ValueEnum)]
enum PredictorArg {
    Keyword,
    Scripted,
    Llm,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Text => Format::Text,
            FormatArg::Json => Format::Machine,
        }
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>, predictor: Option<PredictorArg>) -> Result<RouterConfig> {
    let mut cfg = match path {
        Some(p) => RouterConfig::from_path(p)?,
        None => RouterConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.latency.seed = seed;
    }
    if let Some(p) = predictor {
        cfg.slow.predictor.strategy = match p {
            PredictorArg::Keyword => Strategy::Keyword,
            PredictorArg::Scripted => Strategy::Scripted,
            PredictorArg::Llm => Strategy::Llm,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn bench_for(cfg: RouterConfig, kb: &Path) -> Result<Bench> {
    let docs = load_corpus_dir(kb)?;
    if docs.is_empty() {
        bail!("no .txt documents in {}", kb.display());
    }
    Ok(Bench::from_corpus(cfg, &docs)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { kb, store, config, endpoint, collection } => {
            let cfg = load_config(config.as_deref(), None, None)?;
            let docs = load_corpus_dir(&kb)?;
            if docs.is_empty() {
                bail!("no .txt documents in {}", kb.display());
            }
            let embedder = cfg.embedder.build()?;
            let store: Arc<dyn VectorStore> = match store {
                StoreKind::Local => Arc::new(FlatStore::new(embedder.dim())),
                StoreKind::Remote => {
                    let remote = RemoteStore::new(RemoteStoreConfig {
                        endpoint,
                        collection,
                        dimension: embedder.dim(),
                        ..Default::default()
                    })?;
                    remote.create_collection()?;
                    Arc::new(remote)
                }
            };
            let n = ingest(&docs, &cfg.chunker, embedder.as_ref(), store.as_ref())?;
            println!("ingested {n} chunks from {} documents", docs.len());
        }
        Command::Bench { scenarios, mode, seed, config, kb, predictor, parallel, out, format } => {
            let cfg = load_config(config.as_deref(), Some(seed), predictor)?;
            let scenarios = load_scenarios(&scenarios)?;
            let mode = match mode {
                ModeArg::Baseline => RunMode::Baseline,
                ModeArg::Dual => RunMode::Dual,
                ModeArg::Paired => RunMode::Paired,
            };
            let records = bench_for(cfg, &kb)?.parallel(parallel).run_suite(&scenarios, mode)?;
            let report = aggregate(&records)?;
            emit(&render_report(&report, &records, format.into())?, out.as_deref())?;
        }
        Command::Sweep { thresholds, seed, scenarios, config, kb, predictor, out, format } => {
            let cfg = load_config(config.as_deref(), Some(seed), predictor)?;
            let scenarios = load_scenarios(&scenarios)?;
            let bench = bench_for(cfg, &kb)?;
            let sweep = bench.sweep_threshold(&scenarios, &thresholds)?;
            let records = bench.run_suite(&scenarios, RunMode::Paired)?;
            let mut report = aggregate(&records)?;
            report.sweep = Some(sweep);
            emit(&render_report(&report, &records, format.into())?, out.as_deref())?;
        }
        Command::Report { input, format } => {
            let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let doc = MachineReport::parse(&text)?;
            let report = doc.reaggregate()?;
            if report != doc.report {
                log::warn!("stored aggregates differ from the records; showing recomputed values");
            }
            emit(&render_report(&report, &doc.records, format.into())?, None)?;
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
