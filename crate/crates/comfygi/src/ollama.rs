//! Ollama text generation client (`POST /api/generate`, non-streaming).

use std::time::Duration;

use comfygi_core::{LlmBackend, LlmError, LlmRequest};
use reqwest::blocking::Client;
use serde_json::Value;

use crate::http::{self, Failure};

#[derive(Debug, Clone)]
pub struct OllamaClient {
    base_url: String,
    http: Client,
    retries: u32,
}

impl OllamaClient {
    pub fn new(base_url: impl Into<String>, timeout: Duration, retries: u32) -> Self {
        OllamaClient { base_url: base_url.into(), http: http::client(timeout), retries }
    }

    pub fn request_body(request: &LlmRequest) -> Value {
        serde_json::json!({
            "model": request.model,
            "prompt": request.prompt,
            "stream": false,
            "options": { "seed": request.seed, "temperature": request.temperature },
        })
    }
}

impl LlmBackend for OllamaClient {
    fn complete(&self, request: &LlmRequest) -> Result<String, LlmError> {
        let url = http::join(&self.base_url, "api/generate");
        let body = Self::request_body(request);
        let response = http::send(|| self.http.post(&url).json(&body), self.retries).map_err(|f| match f {
            Failure::Connect(m) => LlmError::Unreachable(m),
            other => LlmError::Request(other.to_string()),
        })?;
        let value: Value = response.json().map_err(|e| LlmError::Request(format!("bad response body: {e}")))?;
        let text = value
            .get("response")
            .and_then(Value::as_str)
            .ok_or_else(|| LlmError::Request(format!("no response field in {value}")))?;
        if text.trim().is_empty() {
            return Err(LlmError::EmptyResponse);
        }
        Ok(text.to_string())
    }
}
