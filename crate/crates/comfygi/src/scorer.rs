//! Client for the image scoring sidecar (`POST /score`, `GET /health`).

use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use comfygi_core::{EvalError, EvalErrorKind, Score};
use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::http::{self, Failure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    #[serde(default)]
    pub mode: Option<String>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, Value>,
}

#[derive(Debug, Clone)]
pub struct ScorerClient {
    base_url: String,
    http: Client,
    retries: u32,
}

impl ScorerClient {
    pub fn new(base_url: impl Into<String>, timeout: Duration, retries: u32) -> Self {
        ScorerClient { base_url: base_url.into(), http: http::client(timeout), retries }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    /// `Ok` only when the sidecar answers 200; a loading sidecar (503) is a
    /// `scorer` failure.
    pub fn health(&self) -> Result<Health, EvalError> {
        let url = http::join(&self.base_url, "health");
        let response = http::send(|| self.http.get(&url), self.retries).map_err(map_failure)?;
        response.json().map_err(|e| EvalError::new(EvalErrorKind::Scorer, format!("bad /health body: {e}")))
    }

    /// Scores `image` against `prompt`.
    pub fn score(&self, prompt: &str, image: &[u8]) -> Result<Score, EvalError> {
        let url = http::join(&self.base_url, "score");
        let body = serde_json::json!({ "prompt": prompt, "image_b64": STANDARD.encode(image) });
        let response = http::send(|| self.http.post(&url).json(&body), self.retries).map_err(map_failure)?;
        let value: Value = response
            .json()
            .map_err(|e| EvalError::new(EvalErrorKind::InvalidScore, format!("bad /score body: {e}")))?;
        let raw = value
            .get("score")
            .and_then(Value::as_f64)
            .ok_or_else(|| EvalError::new(EvalErrorKind::InvalidScore, format!("no numeric score in {value}")))?;
        Score::new(raw)
    }
}

fn map_failure(f: Failure) -> EvalError {
    let kind = match &f {
        Failure::Connect(_) => EvalErrorKind::Unreachable,
        Failure::Status { code: 400, .. } => EvalErrorKind::InvalidInput,
        Failure::Timeout(_) | Failure::Status { .. } | Failure::Other(_) => EvalErrorKind::Scorer,
    };
    EvalError::new(kind, format!("scorer: {f}"))
}
