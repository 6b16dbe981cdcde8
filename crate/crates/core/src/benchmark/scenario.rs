use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_DELAY_S: f64 = 3.0;
pub const MAX_DELAY_S: f64 = 7.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTurn {
    pub query: String,
    /// Topics the scripted predictor announces after this turn.
    #[serde(default)]
    pub topic_labels: Vec<String>,
    pub delay_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub scenario_id: String,
    pub turns: Vec<ScenarioTurn>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parse(format!("scenario {}: {m}", self.scenario_id)));
        if self.turns.is_empty() {
            return bad("no turns".into());
        }
        for (i, t) in self.turns.iter().enumerate() {
            if t.query.trim().is_empty() {
                return bad(format!("turn {i} has an empty query"));
            }
            if !(MIN_DELAY_S..=MAX_DELAY_S).contains(&t.delay_s) {
                return bad(format!("turn {i} delay {} outside [{MIN_DELAY_S}, {MAX_DELAY_S}]", t.delay_s));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<Vec<String>> {
        self.turns.iter().map(|t| t.topic_labels.clone()).collect()
    }

    /// Reads a JSON array of turns; the id is the file stem.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let turns: Vec<ScenarioTurn> =
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let scenario = Scenario {
            scenario_id: path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            turns,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Loads one scenario file, or every `*.json` in a directory sorted by id.
pub fn load_scenarios(path: impl AsRef<Path>) -> Result<Vec<Scenario>> {
    let path = path.as_ref();
    if path.is_file() {
        return Ok(vec![Scenario::from_file(path)?]);
    }
    let entries = std::fs::read_dir(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut files: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| Error::io(path.display().to_string(), e))?.path();
        if p.extension().is_some_and(|e| e == "json") {
            files.push(p);
        }
    }
    files.sort();
    files.iter().map(Scenario::from_file).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_directory_in_id_order() {
        let dir = tempfile::tempdir().unwrap();
        let turn = r#"[{"query": "q", "topic_labels": ["a"], "delay_s": 3.5}]"#;
        std::fs::write(dir.path().join("b.json"), turn).unwrap();
        std::fs::write(dir.path().join("a.json"), turn).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "skip").unwrap();
        let all = load_scenarios(dir.path()).unwrap();
        assert_eq!(all.iter().map(|s| s.scenario_id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(all[0].labels(), [vec!["a".to_string()]]);
        assert_eq!(load_scenarios(dir.path().join("a.json")).unwrap().len(), 1);
    }

    #[test]
    fn rejects_out_of_range_delay() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        std::fs::write(&p, r#"[{"query": "q", "delay_s": 9.0}]"#).unwrap();
        assert!(matches!(Scenario::from_file(&p), Err(Error::Parse(_))));
    }
}
