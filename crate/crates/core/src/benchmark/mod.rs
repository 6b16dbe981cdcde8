//! Paired baseline and dual-agent runs over scripted conversations, metric
//! aggregation, threshold sweeps, and report rendering.

mod metrics;
mod report;
mod runner;
mod scenario;

use std::path::PathBuf;

pub use metrics::{aggregate, BenchmarkReport, BucketRow, Mode, ScenarioRow, SweepRow, TurnRecord, BUCKET_TURNS};
pub use report::{render_report, render_text, round_half_up, Format, MachineReport};
pub use runner::{Bench, RunMode};
pub use scenario::{load_scenarios, Scenario, ScenarioTurn, MAX_DELAY_S, MIN_DELAY_S};

/// The bundled knowledge base and scenario suite.
pub fn fixture_dir() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures"))
}

/// Thresholds swept by default.
pub const DEFAULT_SWEEP: [f32; 6] = [0.30, 0.35, 0.40, 0.45, 0.50, 0.55];
