//! JSONL run logs.
//!
//! Line 1 is a `header`, then one `generation` line per finished
//! generation, then a `summary` line once the run ends. Every line is a JSON
//! object whose `type` field names its kind.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use comfygi_core::{GenerationRecord, MutationConfig, SearchConfig, TerminationReason};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::files::read_text;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub run_id: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub backend: String,
    /// Hash of the workflow the search started from, i.e. the patch baseline.
    pub baseline_hash: String,
    pub planned_slots_per_generation: usize,
    pub initial_score: f64,
    pub search: SearchConfig,
    pub mutation: MutationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub initial_score: f64,
    pub final_score: f64,
    pub generations: usize,
    pub accepted_mutations: usize,
    pub evaluations_used: usize,
    pub termination_reason: TerminationReason,
    pub final_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum LogLine {
    Header(RunHeader),
    Generation(GenerationRecord),
    Summary(RunSummary),
}

impl LogLine {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("log lines serialize");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub path: PathBuf,
    pub header: RunHeader,
    pub generations: Vec<GenerationRecord>,
    /// Missing while the run is still going or if it was interrupted.
    pub summary: Option<RunSummary>,
}

impl RunLog {
    pub fn is_complete(&self) -> bool {
        self.summary.as_ref().is_some_and(|s| s.termination_reason != TerminationReason::BackendFailure)
    }
}

/// Appends lines to a run log, flushing after each one.
pub struct RunLogWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl RunLogWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(RunLogWriter { path: path.to_path_buf(), out: BufWriter::new(file) })
    }

    pub fn write(&mut self, line: &LogLine) -> Result<()> {
        self.out
            .write_all(line.to_line().as_bytes())
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

pub fn parse_run_log(path: &Path, text: &str) -> Result<RunLog> {
    let mut header = None;
    let mut generations = Vec::new();
    let mut summary = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogLine =
            serde_json::from_str(line).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        match parsed {
            LogLine::Header(h) if i == 0 => header = Some(h),
            LogLine::Header(_) => return Err(Error::format(path, format!("line {}: repeated header", i + 1))),
            LogLine::Generation(_) | LogLine::Summary(_) if header.is_none() => {
                return Err(Error::format(path, "first line is not a header"));
            }
            LogLine::Generation(_) | LogLine::Summary(_) if summary.is_some() => {
                return Err(Error::format(path, format!("line {}: content after summary", i + 1)));
            }
            LogLine::Generation(g) => generations.push(g),
            LogLine::Summary(s) => summary = Some(s),
        }
    }
    let header = header.ok_or_else(|| Error::format(path, "empty run log"))?;
    Ok(RunLog { path: path.to_path_buf(), header, generations, summary })
}

pub fn read_run_log(path: &Path) -> Result<RunLog> {
    parse_run_log(path, &read_text(path)?)
}
