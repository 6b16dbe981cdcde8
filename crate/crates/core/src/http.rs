use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

pub(crate) enum Auth<'a> {
    None,
    Bearer(&'a str),
    Header(&'static str, &'a str),
}

pub(crate) fn build_client(timeout_ms: u64) -> Result<Client> {
    Client::builder()
        .timeout(Duration::from_millis(timeout_ms))
        .build()
        .map_err(|e| Error::Network(e.to_string()))
}

/// Sends a JSON body and decodes a JSON reply. Transport failures and
/// 5xx/429 responses map to [`Error::Network`]; any other failure is a
/// [`Error::Protocol`].
pub(crate) fn send_json<T: DeserializeOwned>(
    http: &Client,
    method: Method,
    url: &str,
    auth: Auth<'_>,
    body: &serde_json::Value,
) -> Result<T> {
    let mut req = http.request(method, url).json(body);
    req = match auth {
        Auth::None => req,
        Auth::Bearer(key) => req.bearer_auth(key),
        Auth::Header(name, value) => req.header(name, value),
    };
    let resp = req.send().map_err(|e| Error::Network(e.to_string()))?;
    let status = resp.status();
    if !status.is_success() {
        let msg = format!("{url} returned {status}");
        return Err(
            if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
                Error::Network(msg)
            } else {
                Error::Protocol(msg)
            },
        );
    }
    let bytes = resp.bytes().map_err(|e| Error::Network(e.to_string()))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Protocol(format!("{url}: {e}")))
}
