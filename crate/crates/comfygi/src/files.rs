//! On-disk formats: workflows, patches, statement pools, benchmark prompt
//! files and simulated landscapes.

use std::fs;
use std::path::Path;

use comfygi_core::defaults::parse_statement_pool;
use comfygi_core::{Patch, SimulatedLandscape, Workflow};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The 42 benchmark prompts, 3 in each of 14 categories.
pub const BENCHMARK_PROMPTS_TSV: &str = include_str!("../data/benchmark_prompts.tsv");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkPrompt {
    pub category: String,
    pub prompt: String,
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `text`, creating parent directories as needed.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::format(path, e))
}

pub fn read_workflow(path: &Path) -> Result<Workflow> {
    Workflow::parse(&read_text(path)?).map_err(|e| Error::format(path, e))
}

/// Canonical serialization plus a trailing newline.
pub fn workflow_file_text(w: &Workflow) -> String {
    let mut text = w.to_canonical_json();
    text.push('\n');
    text
}

pub fn write_workflow(path: &Path, w: &Workflow) -> Result<()> {
    write_text(path, &workflow_file_text(w))
}

pub fn read_patch(path: &Path) -> Result<Patch> {
    Patch::from_json(&read_text(path)?).map_err(|e| Error::format(path, e))
}

pub fn write_patch(path: &Path, patch: &Patch) -> Result<()> {
    let mut text = patch.to_json_pretty();
    text.push('\n');
    write_text(path, &text)
}

/// One entry per line; blank lines and `#` comments are skipped.
pub fn read_pool(path: &Path) -> Result<Vec<String>> {
    let pool = parse_statement_pool(&read_text(path)?);
    if pool.is_empty() {
        return Err(Error::format(path, "no entries"));
    }
    Ok(pool)
}

/// Parses `category<TAB>prompt` lines.
pub fn parse_prompts(text: &str) -> Result<Vec<BenchmarkPrompt>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (category, prompt) =
            line.split_once('\t').ok_or_else(|| format!("line {}: expected category<TAB>prompt", i + 1))?;
        let (category, prompt) = (category.trim(), prompt.trim());
        if category.is_empty() || prompt.is_empty() {
            return Err(format!("line {}: empty category or prompt", i + 1));
        }
        out.push(BenchmarkPrompt { category: category.into(), prompt: prompt.into() });
    }
    if out.is_empty() {
        return Err("no prompts".into());
    }
    Ok(out)
}

pub fn read_prompts(path: &Path) -> Result<Vec<BenchmarkPrompt>> {
    parse_prompts(&read_text(path)?).map_err(|e| Error::format(path, e))
}

pub fn bundled_prompts() -> Vec<BenchmarkPrompt> {
    parse_prompts(BENCHMARK_PROMPTS_TSV).expect("bundled prompts parse")
}

pub fn read_landscape(path: &Path) -> Result<SimulatedLandscape> {
    let landscape: SimulatedLandscape = read_json(path)?;
    landscape.check().map_err(|e| Error::format(path, e))?;
    Ok(landscape)
}
