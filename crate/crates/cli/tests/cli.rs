use std::process::{Command, Output};

fn memrouter(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memrouter")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn fixtures() -> String {
    format!("{}/../core/fixtures", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn ingest_reports_chunk_count() {
    let out = memrouter(&["ingest", "--kb", &format!("{}/kb", fixtures())]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "ingested 79 chunks from 12 documents");
}

#[test]
fn bench_json_renders_back_to_the_same_text() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("run.json");
    let scenarios = format!("{}/scenarios/s01_product_tour.json", fixtures());
    let common = ["bench", "--scenarios", &scenarios, "--mode", "paired", "--seed", "3", "--predictor", "scripted"];
    let text = memrouter(&common);
    assert!(text.status.success());
    let mut args = common.to_vec();
    args.extend(["--format", "json", "--out", json.to_str().unwrap()]);
    assert!(memrouter(&args).status.success());
    let rendered = memrouter(&["report", "--in", json.to_str().unwrap(), "--format", "text"]);
    assert!(rendered.status.success());
    assert_eq!(stdout(&rendered), stdout(&text));
    assert!(stdout(&text).contains("Hit rate by conversation depth"));
}

#[test]
fn sweep_lists_requested_thresholds() {
    let scenarios = format!("{}/scenarios/s02_pricing_deep_dive.json", fixtures());
    let out = memrouter(&["sweep", "--scenarios", &scenarios, "--thresholds", "0.3,0.5", "--seed", "1"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("Similarity threshold sweep"));
    assert!(text.lines().any(|l| l.starts_with("0.30")) && text.lines().any(|l| l.starts_with("0.50")));
}

#[test]
fn errors_exit_nonzero_with_a_diagnostic() {
    for args in [
        vec!["bench", "--scenarios", "/does/not/exist"],
        vec!["sweep", "--thresholds", "1.5"],
        vec!["report", "--in", "/does/not/exist.json"],
        vec!["bench", "--mode", "sideways"],
    ] {
        let out = memrouter(&args);
        assert!(!out.status.success(), "{args:?}");
        assert!(!out.stderr.is_empty(), "{args:?}");
    }
}
