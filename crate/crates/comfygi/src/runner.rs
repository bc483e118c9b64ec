//! One optimization run from configuration to files on disk.
//!
//! A run directory holds:
//!
//! * `run.jsonl`: the run log (see [`crate::runlog`])
//! * `baseline.json`: the workflow the search started from (canonical)
//! * `optimized.json`: the final incumbent (canonical)
//! * `patch.json`: accepted mutations, replayable against `baseline.json`
//! * `manifest.json`: a [`RunManifest`]
//! * `images/`: rendered images by workflow hash (live backend only)

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use comfygi_core::llm::ScriptedLlm;
use comfygi_core::search::{run_hill_climb_observed, SearchObserver};
use comfygi_core::{
    EvalContext, Evaluator, GenerationRecord, InputValue, LlmBackend, MutationConfig, RunResult, SearchConfig,
    SimulatedLandscape, TerminationReason, Workflow,
};
use serde::{Deserialize, Serialize};

use crate::comfyui::{ComfyUiClient, ComfyUiConfig, ComfyUiEvaluator};
use crate::concurrent::Concurrent;
use crate::error::{Error, Result};
use crate::files::{write_json, write_patch, write_workflow};
use crate::ollama::OllamaClient;
use crate::runlog::{LogLine, RunHeader, RunLogWriter, RunSummary};
use crate::scorer::ScorerClient;

pub const RUN_LOG: &str = "run.jsonl";
pub const PATCH: &str = "patch.json";
pub const BASELINE: &str = "baseline.json";
pub const OPTIMIZED: &str = "optimized.json";
pub const MANIFEST: &str = "manifest.json";
pub const IMAGES: &str = "images";

#[derive(Debug, Clone, PartialEq)]
pub enum BackendSpec {
    Simulated(SimulatedLandscape),
    ComfyUi {
        comfyui: ComfyUiConfig,
        scorer_url: String,
        /// Candidates rendered concurrently.
        in_flight: usize,
        keep_images: bool,
    },
}

impl BackendSpec {
    pub fn name(&self) -> &'static str {
        match self {
            BackendSpec::Simulated(_) => "simulated",
            BackendSpec::ComfyUi { .. } => "comfyui",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LlmSpec {
    /// Offline: appends an entry of the side's statement pool.
    Scripted,
    Ollama {
        url: String,
        timeout: Duration,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub run_id: String,
    pub prompt: String,
    pub category: Option<String>,
    /// Put `prompt` into the workflow's positive prompt before searching.
    pub set_prompt: bool,
    pub workflow: Workflow,
    pub search: SearchConfig,
    pub mutation: MutationConfig,
    pub backend: BackendSpec,
    pub llm: LlmSpec,
    pub out_dir: PathBuf,
    /// Timestamp stored in the patch and manifest, if any.
    pub created_at: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub backend: String,
    pub llm: String,
    pub search: SearchConfig,
    pub mutation: MutationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landscape: Option<SimulatedLandscape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comfyui_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scorer_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ollama_url: Option<String>,
}

/// Paths relative to the run directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestPaths {
    pub run_log: String,
    pub patch: String,
    pub baseline: String,
    pub optimized: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_image: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub run_seed: u64,
    pub initial_score: f64,
    pub final_score: f64,
    pub generations: usize,
    pub accepted_mutations: usize,
    pub evaluations_used: usize,
    pub termination_reason: TerminationReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
    pub config: ConfigSnapshot,
    pub paths: ManifestPaths,
}

impl RunSpec {
    fn snapshot(&self) -> ConfigSnapshot {
        let (landscape, comfyui_url, scorer_url) = match &self.backend {
            BackendSpec::Simulated(l) => (Some(l.clone()), None, None),
            BackendSpec::ComfyUi { comfyui, scorer_url, .. } => {
                (None, Some(comfyui.base_url.clone()), Some(scorer_url.clone()))
            }
        };
        let (llm, ollama_url) = match &self.llm {
            LlmSpec::Scripted => ("scripted", None),
            LlmSpec::Ollama { url, .. } => ("ollama", Some(url.clone())),
        };
        ConfigSnapshot {
            backend: self.backend.name().into(),
            llm: llm.into(),
            search: self.search.clone(),
            mutation: self.mutation.clone(),
            landscape,
            comfyui_url,
            scorer_url,
            ollama_url,
        }
    }

    /// The workflow handed to the search.
    pub fn start_workflow(&self) -> Result<Workflow> {
        if !self.set_prompt {
            return Ok(self.workflow.clone());
        }
        let roles = self.workflow.resolve_roles()?;
        Ok(self.workflow.set_field(&roles.positive_prompt_id, "text", InputValue::Text(self.prompt.clone()))?)
    }
}

struct LogObserver {
    writer: RunLogWriter,
    header: RunHeader,
    error: Option<Error>,
}

impl LogObserver {
    fn write(&mut self, line: &LogLine) {
        if self.error.is_none() {
            if let Err(e) = self.writer.write(line) {
                self.error = Some(e);
            }
        }
    }
}

impl SearchObserver for LogObserver {
    fn initial(&mut self, workflow: &Workflow, score: f64) {
        self.header.baseline_hash = workflow.canonical_hash();
        self.header.initial_score = score;
        log::info!("{}: initial score {score}", self.header.run_id);
        self.write(&LogLine::Header(self.header.clone()));
    }

    fn generation(&mut self, record: &GenerationRecord) {
        log::info!(
            "{}: generation {} best {:?} incumbent {}",
            self.header.run_id,
            record.generation,
            record.best_candidate_score,
            record.incumbent_score_after
        );
        self.write(&LogLine::Generation(record.clone()));
    }
}

fn search(
    spec: &RunSpec,
    start: &Workflow,
    evaluator: &dyn Evaluator,
    observer: &mut LogObserver,
) -> Result<RunResult> {
    let ctx = EvalContext::new(spec.prompt.clone());
    let scripted;
    let ollama;
    let llm: &dyn LlmBackend = match &spec.llm {
        LlmSpec::Scripted => {
            scripted = ScriptedLlm::new(
                spec.mutation.positive_statement_pool.clone(),
                spec.mutation.negative_statement_pool.clone(),
            );
            &scripted
        }
        LlmSpec::Ollama { url, timeout } => {
            ollama = OllamaClient::new(url.clone(), *timeout, 1);
            &ollama
        }
    };
    Ok(run_hill_climb_observed(start, &spec.search, &spec.mutation, evaluator, llm, &ctx, observer)?)
}

fn existing(dir: &Path, rel: String) -> Option<String> {
    dir.join(&rel).is_file().then_some(rel)
}

/// Runs the search described by `spec` and writes its directory. A run that
/// ends in a backend failure still writes every file; its manifest records
/// the failure.
pub fn execute_run(spec: &RunSpec) -> Result<RunManifest> {
    let dir = &spec.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let start = spec.start_workflow()?;

    let header = RunHeader {
        run_id: spec.run_id.clone(),
        prompt: spec.prompt.clone(),
        category: spec.category.clone(),
        backend: spec.backend.name().into(),
        baseline_hash: start.canonical_hash(),
        planned_slots_per_generation: spec.search.slots_per_generation(),
        initial_score: 0.0,
        search: spec.search.clone(),
        mutation: spec.mutation.clone(),
    };
    let mut observer = LogObserver { writer: RunLogWriter::create(&dir.join(RUN_LOG))?, header, error: None };

    let result = match &spec.backend {
        BackendSpec::Simulated(landscape) => {
            landscape.check().map_err(Error::Usage)?;
            search(spec, &start, landscape, &mut observer)?
        }
        BackendSpec::ComfyUi { comfyui, scorer_url, in_flight, keep_images } => {
            let scorer = ScorerClient::new(scorer_url.clone(), comfyui.request_timeout, comfyui.retries);
            if let Err(e) = scorer.health() {
                log::warn!("scorer health check failed: {e}");
            }
            let mut evaluator = ComfyUiEvaluator::new(ComfyUiClient::new(comfyui.clone()), scorer);
            if *keep_images {
                evaluator = evaluator.with_image_dir(dir.join(IMAGES));
            }
            search(spec, &start, &Concurrent::new(evaluator, *in_flight), &mut observer)?
        }
    };
    if let Some(e) = observer.error.take() {
        return Err(e);
    }

    let summary = RunSummary {
        initial_score: result.initial_score,
        final_score: result.final_score,
        generations: result.generations.len(),
        accepted_mutations: result.patch.len(),
        evaluations_used: result.evaluations_used,
        termination_reason: result.termination_reason,
        final_hash: result.final_workflow.canonical_hash(),
        failure: result.failure.clone(),
    };
    observer.writer.write(&LogLine::Summary(summary.clone()))?;

    let mut patch = result.patch.clone();
    patch.metadata.run_id = Some(spec.run_id.clone());
    patch.metadata.created_at = spec.created_at.clone();
    write_workflow(&dir.join(BASELINE), &result.initial_workflow)?;
    write_workflow(&dir.join(OPTIMIZED), &result.final_workflow)?;
    write_patch(&dir.join(PATCH), &patch)?;

    let image = |w: &Workflow| existing(dir, format!("{IMAGES}/{}.png", w.canonical_hash()));
    let manifest = RunManifest {
        run_id: spec.run_id.clone(),
        prompt: spec.prompt.clone(),
        category: spec.category.clone(),
        run_seed: spec.search.run_seed,
        initial_score: summary.initial_score,
        final_score: summary.final_score,
        generations: summary.generations,
        accepted_mutations: summary.accepted_mutations,
        evaluations_used: summary.evaluations_used,
        termination_reason: summary.termination_reason,
        failure: summary.failure,
        created_at: spec.created_at.clone(),
        config: spec.snapshot(),
        paths: ManifestPaths {
            run_log: RUN_LOG.into(),
            patch: PATCH.into(),
            baseline: BASELINE.into(),
            optimized: OPTIMIZED.into(),
            initial_image: image(&result.initial_workflow),
            final_image: image(&result.final_workflow),
        },
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}
