//! Minimal JSON-over-HTTP client shared by the completion and embedding
//! backends: bearer auth, per-request timeout, bounded retries with
//! exponential backoff on transient failures.

use std::thread;
use std::time::Duration;

use log::{debug, warn};
use reqwest::blocking::Client;
use serde_json::Value;

use crate::error::BackendError;

#[derive(Clone)]
pub(crate) struct JsonClient {
    client: Client,
    api_key: Option<String>,
    max_retries: u32,
    backoff: Duration,
}

impl JsonClient {
    pub(crate) fn new(
        timeout: Duration,
        api_key: Option<String>,
        max_retries: u32,
        backoff: Duration,
    ) -> Result<Self, BackendError> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::NotConfigured(e.to_string()))?;
        Ok(Self {
            client,
            api_key,
            max_retries,
            backoff,
        })
    }

    /// POSTs `body` to `url` and returns the decoded JSON response. Retries
    /// transport failures, timeouts, 429 and 5xx up to `max_retries` times.
    pub(crate) fn post(&self, url: &str, body: &Value) -> Result<Value, BackendError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            let err = match self.post_once(url, body, attempt) {
                Ok(v) => return Ok(v),
                Err(e) => e,
            };
            if !err.is_retryable() || attempt > self.max_retries {
                return Err(err);
            }
            let wait = self.backoff * 2u32.saturating_pow(attempt - 1);
            warn!("request to {url} failed (attempt {attempt}): {err}; retrying in {wait:?}");
            thread::sleep(wait);
        }
    }

    fn post_once(&self, url: &str, body: &Value, attempt: u32) -> Result<Value, BackendError> {
        debug!("POST {url} (attempt {attempt})");
        let mut req = self.client.post(url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| classify(e, attempt))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| classify(e, attempt))?;
        if !status.is_success() {
            return Err(BackendError::Status {
                status: status.as_u16(),
                body: truncate(&text, 512),
            });
        }
        serde_json::from_str(&text).map_err(|e| BackendError::Protocol(format!("response is not JSON: {e}")))
    }
}

fn classify(e: reqwest::Error, attempts: u32) -> BackendError {
    if e.is_timeout() {
        BackendError::Timeout { attempts }
    } else {
        BackendError::Transport {
            attempts,
            message: e.to_string(),
        }
    }
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}…", &s[..i]),
        None => s.to_string(),
    }
}

/// Joins a base URL and a path without doubling the slash.
pub(crate) fn join(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path.trim_start_matches('/'))
}
