//! Aggregate statistics over finished run logs.
//!
//! The report is a pure function of the logs it is given: the same logs in
//! any order produce the same JSON.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use comfygi_core::TerminationReason;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::runlog::{read_run_log, RunLog};
use crate::runner::RUN_LOG;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub run_id: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub initial_score: f64,
    pub final_score: f64,
    /// `final - initial`.
    pub improvement: f64,
    /// Number of generation records, including the final non-improving one.
    pub generations: usize,
    pub accepted_mutations: usize,
    pub termination_reason: TerminationReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    /// Mean over all runs of incumbent score minus initial score after this
    /// generation. Runs that stopped earlier contribute their final score.
    pub mean_improvement: f64,
    /// Population standard deviation of the same values.
    pub std_improvement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorStats {
    pub generation: usize,
    /// Accepted mutations per operator at this generation.
    pub counts: BTreeMap<String, usize>,
    /// Summed score gain of those mutations per operator.
    pub score_deltas: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Medians {
    pub runs: usize,
    pub median_initial: f64,
    pub median_final: f64,
    /// Median of per-run `final - initial`.
    pub median_improvement: f64,
    /// `(median_final / median_initial - 1) * 100`; absent when the median
    /// initial score is not positive.
    pub median_improvement_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub completed_runs: usize,
    /// Logs without a summary line or ended by a backend failure.
    pub excluded_runs: Vec<String>,
    #[serde(flatten)]
    pub medians: Medians,
    pub runs: Vec<RunStats>,
    pub per_generation: Vec<GenerationStats>,
    /// Generations until convergence -> number of runs.
    pub convergence_histogram: BTreeMap<usize, usize>,
    pub operator_attribution: Vec<OperatorStats>,
    pub operator_totals: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub by_category: Option<BTreeMap<String, Medians>>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn medians(runs: &[&RunStats]) -> Medians {
    let initial: Vec<f64> = runs.iter().map(|r| r.initial_score).collect();
    let fin: Vec<f64> = runs.iter().map(|r| r.final_score).collect();
    let delta: Vec<f64> = runs.iter().map(|r| r.improvement).collect();
    let median_initial = median(&initial);
    let median_final = median(&fin);
    Medians {
        runs: runs.len(),
        median_initial,
        median_final,
        median_improvement: median(&delta),
        median_improvement_pct: (median_initial > 0.0).then(|| (median_final / median_initial - 1.0) * 100.0),
    }
}

/// Finds every `run.jsonl` under `dir`, in path order.
pub fn collect_run_logs(dir: &Path) -> Result<Vec<RunLog>> {
    let mut logs = Vec::new();
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::format(dir, e))?;
        if entry.file_type().is_file() && entry.file_name() == RUN_LOG {
            logs.push(read_run_log(entry.path())?);
        }
    }
    Ok(logs)
}

pub fn build_report(logs: &[RunLog], by_category: bool) -> Result<Report, String> {
    let mut excluded = Vec::new();
    let mut complete: Vec<&RunLog> = Vec::new();
    for log in logs {
        if log.is_complete() {
            complete.push(log);
        } else {
            excluded.push(log.header.run_id.clone());
        }
    }
    if complete.is_empty() {
        return Err("no completed runs".into());
    }
    complete.sort_by(|a, b| (&a.header.run_id, &a.path).cmp(&(&b.header.run_id, &b.path)));
    excluded.sort();

    let runs: Vec<RunStats> = complete
        .iter()
        .map(|log| {
            let s = log.summary.as_ref().expect("complete logs have a summary");
            RunStats {
                run_id: log.header.run_id.clone(),
                prompt: log.header.prompt.clone(),
                category: log.header.category.clone(),
                initial_score: s.initial_score,
                final_score: s.final_score,
                improvement: s.final_score - s.initial_score,
                generations: log.generations.len(),
                accepted_mutations: s.accepted_mutations,
                termination_reason: s.termination_reason,
            }
        })
        .collect();

    let max_gen = complete.iter().map(|l| l.generations.len()).max().unwrap_or(0);
    let mut per_generation = Vec::with_capacity(max_gen);
    for g in 1..=max_gen {
        let values: Vec<f64> = complete
            .iter()
            .zip(&runs)
            .map(|(log, r)| {
                let score = log.generations.get(g - 1).map_or(r.final_score, |rec| rec.incumbent_score_after);
                score - r.initial_score
            })
            .collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        per_generation.push(GenerationStats { generation: g, mean_improvement: mean, std_improvement: var.sqrt() });
    }

    let mut convergence_histogram = BTreeMap::new();
    for r in &runs {
        *convergence_histogram.entry(r.generations).or_insert(0) += 1;
    }

    let mut attribution: BTreeMap<usize, OperatorStats> = BTreeMap::new();
    let mut operator_totals = BTreeMap::new();
    for log in &complete {
        for rec in &log.generations {
            let Some(m) = &rec.accepted else { continue };
            let kind = m.kind().as_str().to_string();
            let stats = attribution.entry(rec.generation).or_insert_with(|| OperatorStats {
                generation: rec.generation,
                counts: BTreeMap::new(),
                score_deltas: BTreeMap::new(),
            });
            *stats.counts.entry(kind.clone()).or_insert(0) += 1;
            *stats.score_deltas.entry(kind.clone()).or_insert(0.0) +=
                rec.incumbent_score_after - rec.incumbent_score_before;
            *operator_totals.entry(kind).or_insert(0) += 1;
        }
    }

    let by_category = by_category.then(|| {
        let mut groups: BTreeMap<String, Vec<&RunStats>> = BTreeMap::new();
        for r in &runs {
            let key = r.category.clone().unwrap_or_else(|| "uncategorized".into());
            groups.entry(key).or_default().push(r);
        }
        groups.into_iter().map(|(k, v)| (k, medians(&v))).collect()
    });

    let all: Vec<&RunStats> = runs.iter().collect();
    Ok(Report {
        completed_runs: runs.len(),
        excluded_runs: excluded,
        medians: medians(&all),
        per_generation,
        convergence_histogram,
        operator_attribution: attribution.into_values().collect(),
        operator_totals,
        by_category,
        runs,
    })
}

pub fn report_json(report: &Report) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

fn pct(p: Option<f64>) -> String {
    p.map_or_else(|| "n/a".into(), |p| format!("{p:.2}%"))
}

pub fn render_text(report: &Report) -> String {
    let m = &report.medians;
    let mut out = String::new();
    let _ = writeln!(out, "completed runs: {}", report.completed_runs);
    if !report.excluded_runs.is_empty() {
        let _ = writeln!(out, "excluded runs: {}", report.excluded_runs.join(", "));
    }
    let _ = writeln!(out, "median initial score: {:.4}", m.median_initial);
    let _ = writeln!(out, "median final score: {:.4}", m.median_final);
    let _ = writeln!(out, "median improvement: {}", pct(m.median_improvement_pct));
    let _ = writeln!(out, "median score gain: {:.4}", m.median_improvement);
    let hist: Vec<String> = report.convergence_histogram.iter().map(|(g, n)| format!("{g}:{n}")).collect();
    let _ = writeln!(out, "generations to convergence: {}", hist.join(" "));
    let ops: Vec<String> = report.operator_totals.iter().map(|(k, n)| format!("{k}={n}")).collect();
    let _ = writeln!(out, "accepted mutations: {}", if ops.is_empty() { "none".into() } else { ops.join(" ") });
    for g in &report.per_generation {
        let _ = writeln!(
            out,
            "generation {}: mean improvement {:.4} (std {:.4})",
            g.generation, g.mean_improvement, g.std_improvement
        );
    }
    if let Some(cats) = &report.by_category {
        for (cat, c) in cats {
            let _ = writeln!(
                out,
                "category {cat}: runs {} median initial {:.4} median final {:.4} improvement {}",
                c.runs,
                c.median_initial,
                c.median_final,
                pct(c.median_improvement_pct)
            );
        }
    }
    out
}
