//! Benchmark batches: every prompt of a prompts file, several replicates
//! each, one run directory per (prompt, replicate).

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use comfygi_core::rng::derive_seed;
use comfygi_core::{MutationConfig, SearchConfig, TerminationReason, Workflow};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::files::{write_json, BenchmarkPrompt};
use crate::runner::{execute_run, BackendSpec, LlmSpec, RunSpec};

pub const BATCH_SUMMARY: &str = "batch.json";

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSpec {
    pub prompts: Vec<BenchmarkPrompt>,
    pub runs_per_prompt: usize,
    pub batch_seed: u64,
    /// Runs executed concurrently.
    pub jobs: usize,
    pub workflow: Workflow,
    /// `run_seed` is replaced per run.
    pub search: SearchConfig,
    pub mutation: MutationConfig,
    pub backend: BackendSpec,
    pub llm: LlmSpec,
    pub out_dir: PathBuf,
    pub created_at: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    BackendFailure,
    /// The run could not start or its files could not be written.
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub run_id: String,
    pub prompt_index: usize,
    pub replicate: usize,
    pub category: String,
    pub prompt: String,
    pub run_seed: u64,
    /// Relative to the batch directory.
    pub dir: String,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub batch_seed: u64,
    pub runs_per_prompt: usize,
    pub prompts: usize,
    pub completed: usize,
    pub failed: usize,
    pub runs: Vec<BatchEntry>,
}

pub fn run_seed(batch_seed: u64, prompt_index: usize, replicate: usize) -> u64 {
    derive_seed(&[batch_seed, prompt_index as u64, replicate as u64])
}

pub fn run_id(prompt_index: usize, replicate: usize) -> String {
    format!("p{prompt_index:02}-r{replicate:02}")
}

fn run_one(spec: &BatchSpec, prompt_index: usize, replicate: usize) -> BatchEntry {
    let item = &spec.prompts[prompt_index];
    let id = run_id(prompt_index, replicate);
    let seed = run_seed(spec.batch_seed, prompt_index, replicate);
    let run = RunSpec {
        run_id: id.clone(),
        prompt: item.prompt.clone(),
        category: Some(item.category.clone()),
        set_prompt: true,
        workflow: spec.workflow.clone(),
        search: SearchConfig { run_seed: seed, ..spec.search.clone() },
        mutation: spec.mutation.clone(),
        backend: spec.backend.clone(),
        llm: spec.llm.clone(),
        out_dir: spec.out_dir.join(&id),
        created_at: spec.created_at.clone(),
    };
    let mut entry = BatchEntry {
        run_id: id.clone(),
        prompt_index,
        replicate,
        category: item.category.clone(),
        prompt: item.prompt.clone(),
        run_seed: seed,
        dir: id,
        status: RunStatus::Error,
        initial_score: None,
        final_score: None,
        error: None,
    };
    match execute_run(&run) {
        Ok(m) => {
            entry.status = if m.termination_reason == TerminationReason::BackendFailure {
                RunStatus::BackendFailure
            } else {
                RunStatus::Completed
            };
            entry.initial_score = Some(m.initial_score);
            entry.final_score = Some(m.final_score);
            entry.error = m.failure;
        }
        Err(e) => {
            log::error!("{}: {e}", entry.run_id);
            entry.error = Some(e.to_string());
        }
    }
    entry
}

/// Runs the whole batch. Failed runs are recorded in the summary and do not
/// stop the others. The summary is also written to `batch.json`.
pub fn run_batch(spec: &BatchSpec) -> Result<BatchSummary> {
    let work: Vec<(usize, usize)> =
        (0..spec.prompts.len()).flat_map(|p| (0..spec.runs_per_prompt).map(move |r| (p, r))).collect();
    let next = AtomicUsize::new(0);
    let done: Mutex<Vec<BatchEntry>> = Mutex::new(Vec::with_capacity(work.len()));
    thread::scope(|s| {
        for _ in 0..spec.jobs.clamp(1, work.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(p, r)) = work.get(i) else { break };
                let entry = run_one(spec, p, r);
                done.lock().expect("batch lock").push(entry);
            });
        }
    });
    let mut runs = done.into_inner().expect("batch lock");
    runs.sort_by_key(|e| (e.prompt_index, e.replicate));
    let completed = runs.iter().filter(|e| e.status == RunStatus::Completed).count();
    let summary = BatchSummary {
        batch_seed: spec.batch_seed,
        runs_per_prompt: spec.runs_per_prompt,
        prompts: spec.prompts.len(),
        completed,
        failed: runs.len() - completed,
        runs,
    };
    write_json(&spec.out_dir.join(BATCH_SUMMARY), &summary)?;
    Ok(summary)
}
