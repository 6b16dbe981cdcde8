//! Follow-up topic prediction for the background agent.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::openai::{ChatMessage, OpenAiClient, DEFAULT_TIMEOUT_MS};
use crate::stream::{Role, Turn};
use crate::text::{is_stopword, tokenize};

pub const LLM_API_KEY_ENV: &str = "MEMROUTER_LLM_API_KEY";

const SYSTEM_PROMPT: &str = "You anticipate where a customer-support conversation goes next. \
Given the recent turns, list the topics the user is most likely to ask about next. \
Write each topic as a short description in the style of a documentation passage, not as a question. \
Output one topic per line with no commentary.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    pub text: String,
    pub origin_turn: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Llm,
    #[default]
    Keyword,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    pub strategy: Strategy,
    pub max_predictions: usize,
    pub context_turns: usize,
    pub llm_endpoint: Option<String>,
    pub llm_model: Option<String>,
    pub temperature: f64,
    pub timeout_ms: u64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::default(),
            max_predictions: 5,
            context_turns: 6,
            llm_endpoint: None,
            llm_model: None,
            temperature: 0.3,
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_predictions == 0 {
            return Err(Error::ConfigInvalid("max_predictions must be >= 1".into()));
        }
        if self.context_turns == 0 {
            return Err(Error::ConfigInvalid("context_turns must be >= 1".into()));
        }
        if self.strategy == Strategy::Llm && (self.llm_endpoint.is_none() || self.llm_model.is_none()) {
            return Err(Error::ConfigInvalid("llm strategy needs llm_endpoint and llm_model".into()));
        }
        Ok(())
    }

    /// Builds the configured strategy. The scripted strategy has no
    /// configuration of its own and must be built from a scenario instead.
    pub fn build(&self) -> Result<Arc<dyn Predictor>> {
        self.validate()?;
        match self.strategy {
            Strategy::Keyword => Ok(Arc::new(KeywordPredictor)),
            Strategy::Llm => Ok(Arc::new(LlmPredictor::new(self)?)),
            Strategy::Scripted => Err(Error::ConfigInvalid(
                "scripted predictor is built from scenario labels".into(),
            )),
        }
    }
}

/// The conversation as seen by a predictor.
#[derive(Debug, Clone, Copy)]
pub struct PredictionContext<'a> {
    pub turns: &'a [Turn],
    pub turn_index: u64,
}

pub trait Predictor: Send + Sync {
    fn name(&self) -> &'static str;

    /// At most `n` predictions for what follows `ctx`.
    fn predict(&self, ctx: &PredictionContext<'_>, n: usize) -> Result<Vec<Prediction>>;
}

fn predictions(texts: impl IntoIterator<Item = String>, turn: u64, n: usize) -> Vec<Prediction> {
    texts
        .into_iter()
        .filter(|t| !t.trim().is_empty())
        .take(n)
        .map(|text| Prediction {
            text,
            origin_turn: turn,
        })
        .collect()
}

/// Salient terms of the last user turn, ranked by how often they occur in
/// the whole context, earliest first on ties.
#[derive(Debug, Clone, Copy, Default)]
pub struct KeywordPredictor;

impl KeywordPredictor {
    pub fn terms(turns: &[Turn]) -> Vec<String> {
        let salient = |t: &String| !is_stopword(t) && !t.chars().all(|c| c.is_ascii_digit());
        let Some(last) = turns.iter().rev().find(|t| t.role == Role::User) else {
            return Vec::new();
        };
        let mut freq: HashMap<String, usize> = HashMap::new();
        for turn in turns {
            for tok in tokenize(&turn.text).into_iter().filter(salient) {
                *freq.entry(tok).or_default() += 1;
            }
        }
        let mut terms: Vec<String> = Vec::new();
        for tok in tokenize(&last.text).into_iter().filter(salient) {
            if !terms.contains(&tok) {
                terms.push(tok);
            }
        }
        // stable sort keeps first appearance on ties
        terms.sort_by_key(|t| std::cmp::Reverse(freq[t]));
        terms
    }
}

impl Predictor for KeywordPredictor {
    fn name(&self) -> &'static str {
        "keyword"
    }

    fn predict(&self, ctx: &PredictionContext<'_>, n: usize) -> Result<Vec<Prediction>> {
        let texts = Self::terms(ctx.turns)
            .into_iter()
            .map(|t| format!("information about {t}"));
        Ok(predictions(texts, ctx.turn_index, n))
    }
}

/// Replays authored topic labels: the labels attached to turn `i` are the
/// prediction made after turn `i`.
#[derive(Debug, Clone, Default)]
pub struct ScriptedPredictor {
    labels: Vec<Vec<String>>,
}

impl ScriptedPredictor {
    pub fn new(labels: Vec<Vec<String>>) -> Self {
        Self { labels }
    }
}

impl Predictor for ScriptedPredictor {
    fn name(&self) -> &'static str {
        "scripted"
    }

    fn predict(&self, ctx: &PredictionContext<'_>, n: usize) -> Result<Vec<Prediction>> {
        let labels = usize::try_from(ctx.turn_index)
            .ok()
            .and_then(|i| self.labels.get(i))
            .cloned()
            .unwrap_or_default();
        Ok(predictions(labels, ctx.turn_index, n))
    }
}

pub struct LlmPredictor {
    client: OpenAiClient,
    model: String,
    temperature: f64,
}

impl LlmPredictor {
    pub fn new(cfg: &PredictorConfig) -> Result<Self> {
        let (Some(endpoint), Some(model)) = (&cfg.llm_endpoint, &cfg.llm_model) else {
            return Err(Error::ConfigInvalid("llm strategy needs llm_endpoint and llm_model".into()));
        };
        Ok(Self {
            client: OpenAiClient::new(endpoint, LLM_API_KEY_ENV, cfg.timeout_ms)?,
            model: model.clone(),
            temperature: cfg.temperature,
        })
    }

    fn prompt(turns: &[Turn]) -> String {
        let mut out = String::from("Recent conversation:\n");
        for t in turns {
            let who = match t.role {
                Role::User => "User",
                Role::Agent => "Agent",
            };
            out.push_str(&format!("{who}: {}\n", t.text));
        }
        out.push_str("\nLikely next topics:");
        out
    }
}

/// Splits a model reply into list items, dropping numbering and bullets.
pub fn parse_topic_list(reply: &str) -> Vec<String> {
    reply
        .lines()
        .map(|line| {
            let line = line.trim();
            let rest = line.trim_start_matches(|c: char| c.is_ascii_digit());
            let rest = match rest.strip_prefix(['.', ')', ':']) {
                Some(item) if rest.len() < line.len() => item,
                _ => line.trim_start_matches(['-', '*', '•']),
            };
            rest.trim().trim_matches('"').trim().to_string()
        })
        .filter(|l| !l.is_empty())
        .collect()
}

impl Predictor for LlmPredictor {
    fn name(&self) -> &'static str {
        "llm"
    }

    fn predict(&self, ctx: &PredictionContext<'_>, n: usize) -> Result<Vec<Prediction>> {
        if ctx.turns.is_empty() {
            return Ok(Vec::new());
        }
        let messages = [ChatMessage::system(SYSTEM_PROMPT), ChatMessage::user(Self::prompt(ctx.turns))];
        let reply = self
            .client
            .chat(&self.model, self.temperature, &messages)
            .map_err(|e| Error::PredictorUnavailable(e.to_string()))?;
        Ok(predictions(parse_topic_list(&reply), ctx.turn_index, n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn user(text: &str) -> Turn {
        Turn { role: Role::User, text: text.into() }
    }

    fn agent(text: &str) -> Turn {
        Turn { role: Role::Agent, text: text.into() }
    }

    #[test]
    fn scripted_passes_labels_through() {
        let p = ScriptedPredictor::new(vec![
            vec![],
            vec![],
            vec![],
            vec!["pricing tiers".into(), "annual discount".into()],
        ]);
        let ctx = PredictionContext { turns: &[], turn_index: 3 };
        let got: Vec<_> = p.predict(&ctx, 5).unwrap().into_iter().map(|p| p.text).collect();
        assert_eq!(got, ["pricing tiers", "annual discount"]);
        let past_end = PredictionContext { turns: &[], turn_index: 9 };
        assert!(p.predict(&past_end, 5).unwrap().is_empty());
    }

    #[test]
    fn keyword_drops_stopwords() {
        let turns = [user("How do I configure the contacts API endpoint?")];
        let ctx = PredictionContext { turns: &turns, turn_index: 0 };
        let got: Vec<_> = KeywordPredictor.predict(&ctx, 5).unwrap().into_iter().map(|p| p.text).collect();
        assert_eq!(
            got,
            [
                "information about configure",
                "information about contacts",
                "information about api",
                "information about endpoint",
            ]
        );
    }

    #[test]
    fn keyword_ranks_by_window_frequency() {
        let turns = [
            user("tell me about webhooks"),
            agent("webhooks notify you of deal changes"),
            user("can deal webhooks retry?"),
        ];
        assert_eq!(KeywordPredictor::terms(&turns), ["webhooks", "deal", "retry"]);
    }

    #[test]
    fn keyword_without_user_turn_is_empty() {
        assert!(KeywordPredictor::terms(&[agent("hello there")]).is_empty());
    }

    #[test]
    fn topic_lists_parse_in_common_shapes() {
        let reply = "1. Pricing tiers for teams\n2) Annual billing discount\n\n- SSO setup\n* \"Audit logs\"\n3: Data export\n2024 roadmap items";
        assert_eq!(
            parse_topic_list(reply),
            ["Pricing tiers for teams", "Annual billing discount", "SSO setup", "Audit logs", "Data export", "2024 roadmap items"]
        );
    }

    #[test]
    fn scripted_config_needs_a_scenario() {
        let cfg = PredictorConfig { strategy: super::Strategy::Scripted, ..Default::default() };
        assert!(cfg.build().is_err());
        let cfg = PredictorConfig { strategy: super::Strategy::Llm, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(Error::ConfigInvalid(_))));
    }

    proptest! {
        #[test]
        fn keyword_respects_n_and_is_deterministic(texts in prop::collection::vec("[a-z ]{0,40}", 1..6), n in 1usize..6) {
            let turns: Vec<Turn> = texts.iter().map(|t| user(t)).collect();
            let ctx = PredictionContext { turns: &turns, turn_index: 0 };
            let a = KeywordPredictor.predict(&ctx, n).unwrap();
            prop_assert!(a.len() <= n);
            prop_assert_eq!(a, KeywordPredictor.predict(&ctx, n).unwrap());
        }
    }
}
