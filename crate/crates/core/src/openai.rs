//! Minimal blocking client for OpenAI-compatible embeddings and
//! chat-completions endpoints.

use reqwest::blocking::Client;
use reqwest::Method;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::http::{build_client, send_json, Auth};

pub const DEFAULT_TIMEOUT_MS: u64 = 10_000;

#[derive(Debug, Clone)]
pub struct OpenAiClient {
    http: Client,
    endpoint: String,
    api_key: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: Option<String>,
}

impl OpenAiClient {
    pub fn new(endpoint: &str, api_key_env: &str, timeout_ms: u64) -> Result<Self> {
        Ok(Self {
            http: build_client(timeout_ms)?,
            endpoint: endpoint.trim_end_matches('/').to_string(),
            api_key: std::env::var(api_key_env).ok().filter(|k| !k.is_empty()),
        })
    }

    pub fn embeddings(&self, model: &str, input: &str) -> Result<Vec<f64>> {
        let body = json!({ "model": model, "input": input });
        let resp: EmbeddingResponse = self.post("embeddings", &body)?;
        resp.data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| Error::Protocol("embeddings response has empty data".into()))
    }

    pub fn chat(&self, model: &str, temperature: f64, messages: &[ChatMessage]) -> Result<String> {
        let body = json!({
            "model": model,
            "temperature": temperature,
            "messages": messages,
        });
        let resp: ChatResponse = self.post("chat/completions", &body)?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Error::Protocol("chat response has no message content".into()))
    }

    fn post<T: for<'de> Deserialize<'de>>(&self, path: &str, body: &serde_json::Value) -> Result<T> {
        let auth = match &self.api_key {
            Some(key) => Auth::Bearer(key),
            None => Auth::None,
        };
        send_json(&self.http, Method::POST, &format!("{}/{path}", self.endpoint), auth, body)
    }
}
