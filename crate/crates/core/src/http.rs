//! Minimal JSON-over-HTTP client shared by the remote embedding and chat
//! backends. Transport failures, 429 and 5xx are retried with exponential
//! backoff; any other non-success status is returned immediately.

use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, thiserror::Error)]
pub enum HttpError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("invalid response body: {0}")]
    Decode(String),
    #[error("credential variable `{0}` is not set")]
    MissingCredential(String),
}

impl HttpError {
    pub fn is_retryable(&self) -> bool {
        match self {
            HttpError::Transport(_) => true,
            HttpError::Status { status, .. } => *status == 429 || *status >= 500,
            HttpError::Decode(_) | HttpError::MissingCredential(_) => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 3, initial_backoff_ms: 500, timeout_secs: 120 }
    }
}

#[derive(Debug, Clone)]
pub struct JsonClient {
    client: reqwest::blocking::Client,
    bearer: Option<String>,
    retry: RetryPolicy,
}

impl JsonClient {
    /// `api_key_env` names an environment variable holding the bearer token.
    pub fn new(api_key_env: Option<&str>, retry: RetryPolicy) -> Result<Self, HttpError> {
        let bearer = match api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| HttpError::MissingCredential(var.to_string()))?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(retry.timeout_secs.max(1)))
            .build()
            .map_err(|e| HttpError::Transport(e.to_string()))?;
        Ok(Self { client, bearer, retry })
    }

    pub fn post_json(&self, url: &str, body: &serde_json::Value) -> Result<serde_json::Value, HttpError> {
        let mut attempt = 0;
        loop {
            match self.post_once(url, body) {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt < self.retry.max_retries => {
                    let wait = self.retry.initial_backoff_ms.saturating_mul(1 << attempt.min(16));
                    log::warn!("POST {url} failed ({e}); retry {} in {wait} ms", attempt + 1);
                    std::thread::sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn post_once(&self, url: &str, body: &serde_json::Value) -> Result<serde_json::Value, HttpError> {
        let mut req = self.client.post(url).json(body);
        if let Some(token) = &self.bearer {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| HttpError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| HttpError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(HttpError::Status { status: status.as_u16(), body: truncate(&text, 512) });
        }
        serde_json::from_str(&text).map_err(|e| HttpError::Decode(e.to_string()))
    }
}

pub(crate) fn join_url(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path.trim_start_matches('/'))
}

pub(crate) fn decode<T: for<'de> Deserialize<'de>>(value: serde_json::Value) -> Result<T, HttpError> {
    serde_json::from_value(value).map_err(|e| HttpError::Decode(e.to_string()))
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}…", &s[..i]),
        None => s.to_string(),
    }
}
