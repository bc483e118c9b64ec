//! Command line: `run`, `apply-patch`, `batch` and `report`.

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use comfygi_core::defaults::default_workflow;
use comfygi_core::search::RandomizeInitial;
use comfygi_core::{MutationConfig, MutationKind, SearchConfig, TerminationReason};

use crate::batch::{run_batch, BatchSpec};
use crate::comfyui::ComfyUiConfig;
use crate::error::{Error, Result};
use crate::files::{
    bundled_prompts, read_landscape, read_patch, read_pool, read_prompts, read_workflow, workflow_file_text, write_text,
};
use crate::report::{build_report, collect_run_logs, render_text, report_json};
use crate::runner::{execute_run, BackendSpec, LlmSpec, RunSpec};

/// Exit status of a run that ended in a backend failure.
pub const EXIT_BACKEND_FAILURE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "comfygi", version, about = "Hill-climbing optimizer for ComfyUI text-to-image workflows")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize one workflow for one prompt.
    Run(RunArgs),
    /// Apply a recorded patch to a workflow.
    ApplyPatch(ApplyPatchArgs),
    /// Run every prompt of a prompts file several times.
    Batch(BatchArgs),
    /// Summarize the run logs under a directory.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Comfyui,
    Simulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LlmKind {
    Ollama,
    Scripted,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Neighbors sampled per operator and generation.
    #[arg(long, default_value_t = 30)]
    pub neighbors: usize,
    /// Comma-separated operators to enable.
    #[arg(long, value_delimiter = ',', default_value = "checkpoint,ksampler,prompt_word,prompt_statement,prompt_llm")]
    pub operators: Vec<String>,
    /// Upper bound on generations per run.
    #[arg(long, default_value_t = 50)]
    pub max_generations: usize,
    /// Positive statement pool, one statement per line.
    #[arg(long)]
    pub positive_pool: Option<PathBuf>,
    /// Negative statement pool, one statement per line.
    #[arg(long)]
    pub negative_pool: Option<PathBuf>,
    /// Checkpoint filenames, one per line.
    #[arg(long)]
    pub checkpoints: Option<PathBuf>,
    /// Comma-separated LLM model names.
    #[arg(long, value_delimiter = ',')]
    pub llm_models: Vec<String>,
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    #[arg(long, value_enum, default_value = "comfyui")]
    pub backend: BackendKind,
    /// Landscape JSON for the simulated backend.
    #[arg(long)]
    pub landscape: Option<PathBuf>,
    #[arg(long, env = "COMFYGI_COMFYUI_URL", default_value = "http://127.0.0.1:8188")]
    pub comfyui_url: String,
    #[arg(long, env = "COMFYGI_OLLAMA_URL", default_value = "http://127.0.0.1:11434")]
    pub ollama_url: String,
    #[arg(long, env = "COMFYGI_SCORER_URL", default_value = "http://127.0.0.1:8000")]
    pub scorer_url: String,
    /// LLM for prompt rewrites; defaults to ollama with comfyui and scripted
    /// with the simulated backend.
    #[arg(long, value_enum)]
    pub llm: Option<LlmKind>,
    /// Seconds to wait for one image.
    #[arg(long, default_value_t = 300)]
    pub timeout: u64,
    /// Candidates rendered concurrently by the comfyui backend.
    #[arg(long, default_value_t = 1)]
    pub in_flight: usize,
    /// Do not keep rendered images.
    #[arg(long)]
    pub no_images: bool,
    /// Timestamp recorded in patches and manifests (RFC 3339). Defaults to
    /// SOURCE_DATE_EPOCH when set, otherwise none.
    #[arg(long)]
    pub created_at: Option<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Baseline workflow in ComfyUI API format.
    #[arg(long)]
    pub workflow: PathBuf,
    /// Prompt the images are scored against; also replaces the workflow's
    /// positive prompt unless --keep-workflow-prompt is given.
    #[arg(long)]
    pub prompt: String,
    /// Label stored in the run log for per-category reports.
    #[arg(long)]
    pub category: Option<String>,
    #[arg(long)]
    pub keep_workflow_prompt: bool,
    /// Run seed; fixes every random draw of the search.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run directory.
    #[arg(long, default_value = "comfygi-run")]
    pub out: PathBuf,
    /// Defaults to `run-<seed>`.
    #[arg(long)]
    pub run_id: Option<String>,
    /// Start from a random checkpoint.
    #[arg(long)]
    pub randomize_checkpoint: bool,
    /// Start from a random KSampler seed.
    #[arg(long)]
    pub randomize_seed: bool,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct ApplyPatchArgs {
    #[arg(long)]
    pub workflow: PathBuf,
    #[arg(long)]
    pub patch: PathBuf,
    /// Apply even if the workflow is not the patch's baseline.
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    /// TSV of `category<TAB>prompt`; defaults to the bundled 42 prompts.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    /// Independent runs per prompt.
    #[arg(long, default_value_t = 10)]
    pub runs_per_prompt: usize,
    /// Defaults to the bundled default workflow.
    #[arg(long)]
    pub workflow: Option<PathBuf>,
    /// Batch seed; each run's seed is derived from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Runs executed concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Keep the workflow's checkpoint and KSampler seed instead of drawing
    /// them per run (drawing is the default with the comfyui backend).
    #[arg(long)]
    pub no_randomize: bool,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory searched recursively for `run.jsonl` files.
    #[arg(long)]
    pub runs: PathBuf,
    /// Add medians per prompt category.
    #[arg(long)]
    pub by_category: bool,
    /// Where to write the JSON report; defaults to `<runs>/report.json`.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

fn search_config(args: &SearchArgs, run_seed: u64, randomize: RandomizeInitial) -> Result<SearchConfig> {
    let mut ops = Vec::new();
    for name in &args.operators {
        let kind =
            MutationKind::parse(name.trim()).ok_or_else(|| Error::Usage(format!("unknown operator {name:?}")))?;
        ops.push(kind);
    }
    let cfg = SearchConfig {
        neighbors_per_operator: args.neighbors,
        enabled_operators: ops,
        max_generations: args.max_generations,
        run_seed,
        randomize_initial: randomize,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn mutation_config(args: &SearchArgs) -> Result<MutationConfig> {
    let mut cfg = MutationConfig::default();
    if let Some(p) = &args.positive_pool {
        cfg.positive_statement_pool = read_pool(p)?;
    }
    if let Some(p) = &args.negative_pool {
        cfg.negative_statement_pool = read_pool(p)?;
    }
    if let Some(p) = &args.checkpoints {
        cfg.checkpoint_pool = read_pool(p)?;
    }
    if !args.llm_models.is_empty() {
        cfg.llm_models = args.llm_models.clone();
    }
    Ok(cfg)
}

fn backend_spec(args: &BackendArgs) -> Result<(BackendSpec, LlmSpec)> {
    let timeout = Duration::from_secs(args.timeout);
    let backend = match args.backend {
        BackendKind::Simulated => {
            let path = args
                .landscape
                .as_ref()
                .ok_or_else(|| Error::Usage("--backend simulated requires --landscape".into()))?;
            BackendSpec::Simulated(read_landscape(path)?)
        }
        BackendKind::Comfyui => {
            if args.landscape.is_some() {
                return Err(Error::Usage("--landscape only applies to --backend simulated".into()));
            }
            BackendSpec::ComfyUi {
                comfyui: ComfyUiConfig {
                    base_url: args.comfyui_url.clone(),
                    generation_timeout: timeout,
                    ..ComfyUiConfig::default()
                },
                scorer_url: args.scorer_url.clone(),
                in_flight: args.in_flight.max(1),
                keep_images: !args.no_images,
            }
        }
    };
    let default_llm = match args.backend {
        BackendKind::Simulated => LlmKind::Scripted,
        BackendKind::Comfyui => LlmKind::Ollama,
    };
    let llm = match args.llm.unwrap_or(default_llm) {
        LlmKind::Scripted => LlmSpec::Scripted,
        LlmKind::Ollama => LlmSpec::Ollama { url: args.ollama_url.clone(), timeout },
    };
    Ok((backend, llm))
}

fn created_at(args: &BackendArgs) -> Result<Option<String>> {
    if args.created_at.is_some() {
        return Ok(args.created_at.clone());
    }
    let Ok(epoch) = std::env::var("SOURCE_DATE_EPOCH") else { return Ok(None) };
    let secs: i64 = epoch.trim().parse().map_err(|_| Error::Usage("SOURCE_DATE_EPOCH is not an integer".into()))?;
    let t = chrono::DateTime::from_timestamp(secs, 0)
        .ok_or_else(|| Error::Usage("SOURCE_DATE_EPOCH out of range".into()))?;
    Ok(Some(t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)))
}

fn cmd_run(args: RunArgs) -> Result<i32> {
    let workflow = read_workflow(&args.workflow)?;
    let (backend, llm) = backend_spec(&args.backend)?;
    let randomize = RandomizeInitial { checkpoint: args.randomize_checkpoint, sampler_seed: args.randomize_seed };
    let spec = RunSpec {
        run_id: args.run_id.clone().unwrap_or_else(|| format!("run-{}", args.seed)),
        prompt: args.prompt.clone(),
        category: args.category.clone(),
        set_prompt: !args.keep_workflow_prompt,
        workflow,
        search: search_config(&args.search, args.seed, randomize)?,
        mutation: mutation_config(&args.search)?,
        backend,
        llm,
        out_dir: args.out.clone(),
        created_at: created_at(&args.backend)?,
    };
    let m = execute_run(&spec)?;
    println!("initial score: {}", m.initial_score);
    println!("final score: {}", m.final_score);
    println!("generations: {}", m.generations);
    println!("accepted mutations: {}", m.accepted_mutations);
    println!("termination: {}", termination_name(m.termination_reason));
    println!("output: {}", args.out.display());
    if let Some(f) = &m.failure {
        eprintln!("backend failure: {f}");
    }
    Ok(if m.termination_reason == TerminationReason::BackendFailure { EXIT_BACKEND_FAILURE } else { 0 })
}

fn termination_name(t: TerminationReason) -> &'static str {
    match t {
        TerminationReason::NoImprovement => "no_improvement",
        TerminationReason::MaxGenerations => "max_generations",
        TerminationReason::BackendFailure => "backend_failure",
    }
}

fn cmd_apply_patch(args: ApplyPatchArgs) -> Result<i32> {
    let workflow = read_workflow(&args.workflow)?;
    let patch = read_patch(&args.patch)?;
    let out = patch.apply(&workflow, args.force)?;
    write_text(&args.out, &workflow_file_text(&out))?;
    Ok(0)
}

fn cmd_batch(args: BatchArgs) -> Result<i32> {
    let prompts = match &args.prompts {
        Some(p) => read_prompts(p)?,
        None => bundled_prompts(),
    };
    let workflow = match &args.workflow {
        Some(p) => read_workflow(p)?,
        None => default_workflow(),
    };
    if args.runs_per_prompt == 0 {
        return Err(Error::Usage("--runs-per-prompt must be at least 1".into()));
    }
    let live = args.backend.backend == BackendKind::Comfyui;
    let randomize =
        RandomizeInitial { checkpoint: live && !args.no_randomize, sampler_seed: live && !args.no_randomize };
    let (backend, llm) = backend_spec(&args.backend)?;
    let spec = BatchSpec {
        prompts,
        runs_per_prompt: args.runs_per_prompt,
        batch_seed: args.seed,
        jobs: args.jobs.max(1),
        workflow,
        search: search_config(&args.search, 0, randomize)?,
        mutation: mutation_config(&args.search)?,
        backend,
        llm,
        out_dir: args.out.clone(),
        created_at: created_at(&args.backend)?,
    };
    let summary = run_batch(&spec)?;
    println!("runs: {} completed, {} failed", summary.completed, summary.failed);
    println!("output: {}", args.out.display());
    Ok(if summary.failed > 0 { 1 } else { 0 })
}

fn cmd_report(args: ReportArgs) -> Result<i32> {
    let logs = collect_run_logs(&args.runs)?;
    let report =
        build_report(&logs, args.by_category).map_err(|e| Error::Format { path: args.runs.clone(), message: e })?;
    let json_path = args.json.clone().unwrap_or_else(|| args.runs.join("report.json"));
    write_text(&json_path, &report_json(&report))?;
    print!("{}", render_text(&report));
    println!("report: {}", json_path.display());
    Ok(0)
}

pub fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::ApplyPatch(a) => cmd_apply_patch(a),
        Command::Batch(a) => cmd_batch(a),
        Command::Report(a) => cmd_report(a),
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit status: 0 on success, 2 on usage errors,
/// [`EXIT_BACKEND_FAILURE`] when a run ends in a backend failure, 1 otherwise.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(cli) {
        Ok(code) => code,
        Err(e @ Error::Usage(_)) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
