use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{aggregate, BenchmarkReport, TurnRecord};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Machine,
}

/// Everything a run produced, as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineReport {
    pub records: Vec<TurnRecord>,
    pub report: BenchmarkReport,
}

impl MachineReport {
    pub fn new(records: Vec<TurnRecord>, report: BenchmarkReport) -> Self {
        Self { records, report }
    }

    pub fn parse(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    /// Re-derives the report from the stored records, keeping any sweep.
    pub fn reaggregate(&self) -> Result<BenchmarkReport> {
        let mut report = aggregate(&self.records)?;
        report.sweep = self.report.sweep.clone();
        Ok(report)
    }
}

pub fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

pub fn render_report(report: &BenchmarkReport, records: &[TurnRecord], format: Format) -> Result<String> {
    match format {
        Format::Text => Ok(render_text(report)),
        Format::Machine => {
            let doc = MachineReport::new(records.to_vec(), report.clone());
            Ok(serde_json::to_string_pretty(&doc)? + "\n")
        }
    }
}

const NONE: &str = "---";
const UNDEFINED: &str = "n/a";

fn ms(v: Option<f64>) -> String {
    match v {
        Some(v) if v.abs() < 10.0 => format!("{v:.2} ms"),
        Some(v) => format!("{v:.1} ms"),
        None => UNDEFINED.into(),
    }
}

fn grouped(n: i64) -> String {
    let digits = n.unsigned_abs().to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    if n < 0 {
        out.insert(0, '-');
    }
    out
}

fn rate(hits: usize, queries: usize) -> String {
    if queries == 0 {
        return UNDEFINED.into();
    }
    let pct = round_half_up(100.0 * hits as f64 / queries as f64);
    format!("{pct}% ({hits}/{queries})")
}

fn table(out: &mut String, title: &str, header: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| -> String {
        let parts: Vec<String> = cells
            .zip(&widths)
            .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "{}", line(&mut header.iter().copied()));
    let _ = writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    for row in rows {
        let _ = writeln!(out, "{}", line(&mut row.iter().map(String::as_str)));
    }
    out.push('\n');
}

pub fn render_text(r: &BenchmarkReport) -> String {
    let mut out = String::new();

    let mut overall = Vec::new();
    if r.dual_queries + r.baseline_queries > 0 {
        let speedup = r.speedup.map_or(UNDEFINED.to_string(), |s| format!("{}×", round_half_up(s)));
        overall = vec![
            vec!["Retrieval latency (avg)".into(), ms(r.mean_store_latency_ms), ms(r.mean_cache_hit_latency_ms)],
            vec!["Retrieval speedup".into(), "1×".into(), speedup],
            vec!["Cache hit rate (overall)".into(), NONE.into(), rate(r.hits, r.dual_queries)],
            vec!["Cache hit rate (warm, turn >= 2)".into(), NONE.into(), rate(r.hits, r.warm_queries)],
            vec!["Saved per cache-hit query".into(), NONE.into(), ms(r.saved_per_hit_ms())],
            vec![
                "Total retrieval time saved".into(),
                NONE.into(),
                r.total_saved_ms.map_or(UNDEFINED.into(), |t| format!("{} ms", grouped(round_half_up(t)))),
            ],
        ];
    }
    table(&mut out, "Overall performance", &["Metric", "Baseline", "Dual-agent"], &overall);

    let mut scenarios: Vec<_> = r.per_scenario.iter().collect();
    scenarios.sort_by(|a, b| {
        b.hit_rate
            .unwrap_or(-1.0)
            .total_cmp(&a.hit_rate.unwrap_or(-1.0))
            .then_with(|| a.scenario_id.cmp(&b.scenario_id))
    });
    let rows: Vec<Vec<String>> = scenarios
        .iter()
        .map(|s| vec![s.scenario_id.clone(), rate(s.hits, s.queries), ms(s.mean_store_latency_ms)])
        .collect();
    table(&mut out, "Hit rate by scenario", &["Scenario", "Hit Rate", "Avg. Retrieval"], &rows);

    let rows: Vec<Vec<String>> = r
        .per_bucket
        .iter()
        .map(|b| {
            vec![
                format!("Turns {}-{}", b.first_turn, b.last_turn),
                b.queries.to_string(),
                rate(b.hits, b.queries),
            ]
        })
        .collect();
    table(&mut out, "Hit rate by conversation depth", &["Turn Range", "Queries", "Hit Rate"], &rows);

    if let Some(sweep) = &r.sweep {
        let rows: Vec<Vec<String>> = sweep
            .iter()
            .map(|s| vec![format!("{:.2}", s.threshold), rate(s.hits, s.queries)])
            .collect();
        table(&mut out, "Similarity threshold sweep", &["Threshold", "Hit Rate"], &rows);
    }
    while out.ends_with("\n\n") {
        out.pop();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::metrics::{Mode, SweepRow};

    #[test]
    fn half_up_rounding() {
        assert_eq!(round_half_up(316.45), 316);
        assert_eq!(round_half_up(315.5), 316);
        assert_eq!(round_half_up(78.947), 79);
        assert_eq!(round_half_up(0.5), 1);
    }

    #[test]
    fn thousands_are_grouped() {
        assert_eq!(grouped(16508), "16,508");
        assert_eq!(grouped(999), "999");
        assert_eq!(grouped(1_234_567), "1,234,567");
        assert_eq!(grouped(-1200), "-1,200");
    }

    #[test]
    fn empty_report_has_headers_only() {
        let text = render_text(&BenchmarkReport::default());
        assert!(text.contains("Overall performance") && text.contains("Turn Range"));
        assert!(!text.contains("Retrieval speedup"));
        assert!(!text.contains("Threshold"));
    }

    #[test]
    fn sweep_section_lists_each_threshold() {
        let report = BenchmarkReport {
            sweep: Some(
                [0.30f32, 0.40]
                    .iter()
                    .map(|&threshold| SweepRow { threshold, queries: 10, hits: 5, hit_rate: Some(0.5) })
                    .collect(),
            ),
            ..Default::default()
        };
        let text = render_text(&report);
        for t in ["0.30", "0.40"] {
            assert!(text.lines().any(|l| l.starts_with(t) && l.ends_with("50% (5/10)")), "{text}");
        }
    }

    #[test]
    fn machine_format_round_trips() {
        let records = vec![
            TurnRecord {
                scenario_id: "s".into(),
                turn_index: 0,
                mode: Mode::Dual,
                hit: false,
                retrieval_latency_ms: 123.456789,
                embed_latency_ms: 0.05,
                cache_size: 10,
                query: "q".into(),
            },
            TurnRecord {
                scenario_id: "s".into(),
                turn_index: 0,
                mode: Mode::Baseline,
                hit: false,
                retrieval_latency_ms: 123.456789,
                embed_latency_ms: 0.05,
                cache_size: 0,
                query: "q".into(),
            },
        ];
        let report = aggregate(&records).unwrap();
        let json = render_report(&report, &records, Format::Machine).unwrap();
        let back = MachineReport::parse(&json).unwrap();
        assert_eq!(back.records, records);
        assert_eq!(back.report, report);
        assert_eq!(back.reaggregate().unwrap(), report);
    }
}
