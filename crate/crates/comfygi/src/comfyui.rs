//! ComfyUI server client and the live evaluator built on it.
//!
//! A workflow goes through `POST /prompt`, then `GET /history/{prompt_id}`
//! is polled until the SaveImage node lists an output image, which is fetched
//! with `GET /view` and handed to the scorer together with the original
//! prompt of the run.

use std::fs;
use std::path::PathBuf;
use std::thread;
use std::time::{Duration, Instant};

use comfygi_core::{EvalContext, EvalError, EvalErrorKind, Evaluator, Score, Workflow};
use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::http::{self, Failure};
use crate::scorer::ScorerClient;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComfyUiConfig {
    pub base_url: String,
    /// Deadline for one image, from submission to the history entry.
    pub generation_timeout: Duration,
    pub poll_interval: Duration,
    /// Timeout of a single HTTP request.
    pub request_timeout: Duration,
    /// Extra attempts after a transient HTTP failure.
    pub retries: u32,
}

impl Default for ComfyUiConfig {
    fn default() -> Self {
        ComfyUiConfig {
            base_url: "http://127.0.0.1:8188".into(),
            generation_timeout: Duration::from_secs(300),
            poll_interval: Duration::from_millis(500),
            request_timeout: Duration::from_secs(60),
            retries: 1,
        }
    }
}

/// Where ComfyUI stored an output image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub filename: String,
    #[serde(default)]
    pub subfolder: String,
    #[serde(rename = "type", default = "output_type")]
    pub kind: String,
}

fn output_type() -> String {
    "output".into()
}

#[derive(Debug, Clone)]
pub struct ComfyUiClient {
    cfg: ComfyUiConfig,
    http: Client,
    client_id: String,
}

impl ComfyUiClient {
    pub fn new(cfg: ComfyUiConfig) -> Self {
        let http = http::client(cfg.request_timeout);
        ComfyUiClient { cfg, http, client_id: uuid::Uuid::new_v4().to_string() }
    }

    pub fn config(&self) -> &ComfyUiConfig {
        &self.cfg
    }

    /// Queues `w` and returns its prompt id.
    pub fn submit(&self, w: &Workflow) -> Result<String, EvalError> {
        let url = http::join(&self.cfg.base_url, "prompt");
        let body = serde_json::json!({ "prompt": w.to_json(), "client_id": self.client_id });
        let response = http::send(|| self.http.post(&url).json(&body), self.cfg.retries)
            .map_err(|f| map_failure(f, EvalErrorKind::Submission, "submit"))?;
        let value: Value =
            response.json().map_err(|e| EvalError::new(EvalErrorKind::Submission, format!("bad /prompt body: {e}")))?;
        value
            .get("prompt_id")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| EvalError::new(EvalErrorKind::Submission, format!("no prompt_id in {value}")))
    }

    /// Polls the history until `save_node` lists an image.
    pub fn wait_for_image(&self, prompt_id: &str, save_node: &str) -> Result<ImageRef, EvalError> {
        let url = http::join(&self.cfg.base_url, &format!("history/{prompt_id}"));
        let deadline = Instant::now() + self.cfg.generation_timeout;
        loop {
            let response = http::send(|| self.http.get(&url), self.cfg.retries)
                .map_err(|f| map_failure(f, EvalErrorKind::Fetch, "history"))?;
            let value: Value =
                response.json().map_err(|e| EvalError::new(EvalErrorKind::Fetch, format!("bad /history body: {e}")))?;
            if let Some(entry) = value.get(prompt_id) {
                if let Some(image) = output_image(entry, save_node) {
                    return Ok(image);
                }
                let status = entry.pointer("/status/status_str").and_then(Value::as_str);
                if status == Some("error") {
                    return Err(EvalError::new(
                        EvalErrorKind::Submission,
                        format!("prompt {prompt_id} failed during execution"),
                    ));
                }
                if entry.pointer("/status/completed") == Some(&Value::Bool(true)) {
                    return Err(EvalError::new(
                        EvalErrorKind::Fetch,
                        format!("prompt {prompt_id} finished without an image from node {save_node}"),
                    ));
                }
            }
            if Instant::now() >= deadline {
                return Err(EvalError::new(
                    EvalErrorKind::Timeout,
                    format!("no image for prompt {prompt_id} after {:?}", self.cfg.generation_timeout),
                ));
            }
            thread::sleep(self.cfg.poll_interval);
        }
    }

    pub fn fetch_image(&self, image: &ImageRef) -> Result<Vec<u8>, EvalError> {
        let url = http::join(&self.cfg.base_url, "view");
        let query = [
            ("filename", image.filename.as_str()),
            ("subfolder", image.subfolder.as_str()),
            ("type", image.kind.as_str()),
        ];
        let url = reqwest::Url::parse_with_params(&url, &query)
            .map_err(|e| EvalError::new(EvalErrorKind::Fetch, format!("bad image URL: {e}")))?;
        let response = http::send(|| self.http.get(url.clone()), self.cfg.retries)
            .map_err(|f| map_failure(f, EvalErrorKind::Fetch, "view"))?;
        let bytes =
            response.bytes().map_err(|e| EvalError::new(EvalErrorKind::Fetch, format!("reading image: {e}")))?;
        if bytes.is_empty() {
            return Err(EvalError::new(EvalErrorKind::Fetch, "empty image"));
        }
        Ok(bytes.to_vec())
    }

    /// Submit, wait and fetch in one call.
    pub fn generate(&self, w: &Workflow) -> Result<Vec<u8>, EvalError> {
        let roles = w.resolve_roles()?;
        let prompt_id = self.submit(w)?;
        let image = self.wait_for_image(&prompt_id, &roles.save_id)?;
        self.fetch_image(&image)
    }
}

fn output_image(entry: &Value, save_node: &str) -> Option<ImageRef> {
    let images = entry.get("outputs")?.get(save_node)?.get("images")?.as_array()?;
    images.iter().find_map(|i| serde_json::from_value(i.clone()).ok())
}

fn map_failure(f: Failure, kind: EvalErrorKind, what: &str) -> EvalError {
    let kind = match &f {
        Failure::Connect(_) => EvalErrorKind::Unreachable,
        Failure::Timeout(_) => EvalErrorKind::Timeout,
        _ => kind,
    };
    EvalError::new(kind, format!("ComfyUI {what}: {f}"))
}

/// Renders with ComfyUI and scores with the sidecar. The score is taken
/// against [`EvalContext::prompt`], not the workflow's own prompt text.
#[derive(Debug, Clone)]
pub struct ComfyUiEvaluator {
    pub client: ComfyUiClient,
    pub scorer: ScorerClient,
    /// When set, each image is kept as `<dir>/<workflow hash>.png`.
    pub image_dir: Option<PathBuf>,
}

impl ComfyUiEvaluator {
    pub fn new(client: ComfyUiClient, scorer: ScorerClient) -> Self {
        ComfyUiEvaluator { client, scorer, image_dir: None }
    }

    pub fn with_image_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.image_dir = Some(dir.into());
        self
    }

    pub fn image_path(&self, w: &Workflow) -> Option<PathBuf> {
        self.image_dir.as_ref().map(|d| d.join(format!("{}.png", w.canonical_hash())))
    }
}

impl Evaluator for ComfyUiEvaluator {
    fn evaluate(&self, workflow: &Workflow, ctx: &EvalContext) -> Result<Score, EvalError> {
        let image = self.client.generate(workflow)?;
        if let Some(path) = self.image_path(workflow) {
            let written = path.parent().map_or(Ok(()), fs::create_dir_all).and_then(|_| fs::write(&path, &image));
            if let Err(e) = written {
                log::warn!("could not archive {}: {e}", path.display());
            }
        }
        self.scorer.score(&ctx.prompt, &image)
    }
}
