//! Hill climbing over single-mutation neighborhoods.
//!
//! Each generation samples `neighbors_per_operator` mutations of the
//! incumbent per enabled operator, scores every candidate, and accepts the
//! best one only if it strictly beats the incumbent. Ties go to the lowest
//! (operator index, slot index). The run ends at the first generation without
//! an improvement, at the generation cap, or on a fatal backend failure.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{EvalContext, EvalError, Evaluator, Score};
use crate::llm::{LlmBackend, PromptSide};
use crate::mutation::{
    apply_mutation_in, sample_checkpoint_mutation, sample_ksampler_mutation, sample_prompt_llm_mutation,
    sample_prompt_statement_mutation, sample_prompt_word_mutation, Mutation, MutationConfig, MutationError,
    MutationKind,
};
use crate::patch::Patch;
use crate::rng::{derive_seed, SearchRng};
use crate::workflow::{InputValue, Workflow, WorkflowError, WorkflowRoles};

/// Stream tag for the initial-workflow randomization draws.
const INITIAL_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RandomizeInitial {
    pub checkpoint: bool,
    pub sampler_seed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub neighbors_per_operator: usize,
    pub enabled_operators: Vec<MutationKind>,
    pub max_generations: usize,
    pub run_seed: u64,
    #[serde(default)]
    pub randomize_initial: RandomizeInitial,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            neighbors_per_operator: 30,
            enabled_operators: MutationKind::ALL.to_vec(),
            max_generations: 50,
            run_seed: 0,
            randomize_initial: RandomizeInitial::default(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.neighbors_per_operator == 0 {
            return Err(SearchError::Config("neighbors_per_operator must be at least 1".into()));
        }
        if self.enabled_operators.is_empty() {
            return Err(SearchError::Config("at least one operator must be enabled".into()));
        }
        if self.max_generations == 0 {
            return Err(SearchError::Config("max_generations must be at least 1".into()));
        }
        Ok(())
    }

    /// Enabled operators in the fixed operator order, deduplicated.
    pub fn operators(&self) -> Vec<MutationKind> {
        MutationKind::ALL.into_iter().filter(|k| self.enabled_operators.contains(k)).collect()
    }

    pub fn slots_per_generation(&self) -> usize {
        self.operators().len() * self.neighbors_per_operator
    }
}

/// One neighbor slot of a generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedSlot {
    pub operator: MutationKind,
    pub slot: usize,
    pub seed: u64,
    /// Prompt operators alternate: even slots positive, odd slots negative.
    pub side: Option<PromptSide>,
}

/// Every slot `run_hill_climb` fills in `generation`, in selection order.
pub fn neighbor_plan(cfg: &SearchConfig, generation: usize) -> Vec<PlannedSlot> {
    let mut plan = Vec::with_capacity(cfg.slots_per_generation());
    for operator in cfg.operators() {
        for slot in 0..cfg.neighbors_per_operator {
            let seed = derive_seed(&[cfg.run_seed, generation as u64, operator.index() as u64, slot as u64]);
            let side = operator.targets_prompt().then_some(if slot % 2 == 0 {
                PromptSide::Positive
            } else {
                PromptSide::Negative
            });
            plan.push(PlannedSlot { operator, slot, seed, side });
        }
    }
    plan
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub operator: MutationKind,
    pub slot: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub incumbent_score_before: f64,
    pub candidates: Vec<CandidateRecord>,
    pub best_candidate_score: Option<f64>,
    pub accepted: Option<Mutation>,
    pub incumbent_score_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    NoImprovement,
    MaxGenerations,
    BackendFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub initial_score: f64,
    pub final_score: f64,
    /// The workflow actually evaluated first (after optional randomization).
    pub initial_workflow: Workflow,
    pub final_workflow: Workflow,
    pub patch: Patch,
    pub generations: Vec<GenerationRecord>,
    pub evaluations_used: usize,
    pub termination_reason: TerminationReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    Config(String),
    #[error(transparent)]
    Mutation(#[from] MutationError),
    #[error("baseline workflow is invalid: {}", .0.join("; "))]
    InvalidBaseline(Vec<String>),
    #[error(transparent)]
    Roles(#[from] WorkflowError),
    #[error("baseline evaluation failed: {0}")]
    BaselineEvaluation(EvalError),
}

/// Applies the initial randomization flags to `baseline`.
pub fn randomize_initial(
    baseline: &Workflow,
    roles: &WorkflowRoles,
    cfg: &SearchConfig,
    mcfg: &MutationConfig,
) -> Result<Workflow, WorkflowError> {
    let mut rng = SearchRng::from_seed(derive_seed(&[cfg.run_seed, INITIAL_STREAM]));
    let mut w = baseline.clone();
    if cfg.randomize_initial.checkpoint {
        if let Some(ckpt) = rng.choose(&mcfg.checkpoint_pool) {
            w = w.set_field(&roles.checkpoint_id, "ckpt_name", InputValue::Text(ckpt.clone()))?;
        }
    }
    if cfg.randomize_initial.sampler_seed {
        let seed = rng.int_inclusive(0, mcfg.ksampler.seed_max as i64);
        w = w.set_field(&roles.ksampler_id, "seed", InputValue::Int(seed))?;
    }
    Ok(w)
}

fn sample_slot(
    incumbent: &Workflow,
    roles: &WorkflowRoles,
    slot: &PlannedSlot,
    mcfg: &MutationConfig,
    llm: &dyn LlmBackend,
) -> Result<Mutation, MutationError> {
    let mut rng = SearchRng::from_seed(slot.seed);
    let side = slot.side.unwrap_or(PromptSide::Positive);
    match slot.operator {
        MutationKind::Checkpoint => sample_checkpoint_mutation(incumbent, roles, mcfg, &mut rng),
        MutationKind::Ksampler => sample_ksampler_mutation(incumbent, roles, mcfg, &mut rng),
        MutationKind::PromptWord => sample_prompt_word_mutation(incumbent, roles, side, &mut rng),
        MutationKind::PromptStatement => sample_prompt_statement_mutation(incumbent, roles, side, mcfg, &mut rng),
        MutationKind::PromptLlm => sample_prompt_llm_mutation(incumbent, roles, side, mcfg, &mut rng, llm),
    }
}

/// Receives progress while a search runs.
pub trait SearchObserver {
    fn initial(&mut self, _workflow: &Workflow, _score: f64) {}
    fn generation(&mut self, _record: &GenerationRecord) {}
}

/// Observer that ignores everything.
pub struct NoObserver;

impl SearchObserver for NoObserver {}

/// Runs the hill climber from `baseline`.
///
/// Candidate workflows are cached by canonical hash, so duplicates within
/// and across generations are evaluated once. A fatal evaluator error ends
/// the run with [`TerminationReason::BackendFailure`]; other evaluation
/// errors and infeasible samples only skip their slot.
pub fn run_hill_climb(
    baseline: &Workflow,
    cfg: &SearchConfig,
    mcfg: &MutationConfig,
    evaluator: &dyn Evaluator,
    llm: &dyn LlmBackend,
    ctx: &EvalContext,
) -> Result<RunResult, SearchError> {
    run_hill_climb_observed(baseline, cfg, mcfg, evaluator, llm, ctx, &mut NoObserver)
}

/// [`run_hill_climb`] reporting the initial score and every finished
/// generation to `observer`.
pub fn run_hill_climb_observed(
    baseline: &Workflow,
    cfg: &SearchConfig,
    mcfg: &MutationConfig,
    evaluator: &dyn Evaluator,
    llm: &dyn LlmBackend,
    ctx: &EvalContext,
    observer: &mut dyn SearchObserver,
) -> Result<RunResult, SearchError> {
    cfg.validate()?;
    mcfg.validate(&cfg.operators())?;
    let violations = baseline.validate();
    if !violations.is_empty() {
        return Err(SearchError::InvalidBaseline(violations.iter().map(ToString::to_string).collect()));
    }
    let roles = baseline.resolve_roles()?;

    let initial = randomize_initial(baseline, &roles, cfg, mcfg)?;
    let initial_score = evaluator.evaluate(&initial, ctx).map_err(SearchError::BaselineEvaluation)?;
    let mut evaluations_used = 1;
    observer.initial(&initial, initial_score.value());

    let mut cache: BTreeMap<String, Score> = BTreeMap::new();
    cache.insert(initial.canonical_hash(), initial_score);

    let mut patch = Patch::for_baseline(&initial);
    let mut incumbent = initial.clone();
    let mut incumbent_score = initial_score;
    let mut generations = Vec::new();
    let mut termination = TerminationReason::MaxGenerations;
    let mut failure = None;

    for generation in 1..=cfg.max_generations {
        let plan = neighbor_plan(cfg, generation);

        // Sample and apply; each slot ends up skipped or holding a candidate.
        let mut records = Vec::with_capacity(plan.len());
        let mut candidates: Vec<Option<(Mutation, Workflow, String)>> = Vec::with_capacity(plan.len());
        for slot in &plan {
            let mut record = CandidateRecord {
                operator: slot.operator,
                slot: slot.slot,
                mutation: None,
                score: None,
                skipped: None,
            };
            let sampled = sample_slot(&incumbent, &roles, slot, mcfg, llm).and_then(|m| {
                let w = apply_mutation_in(&mcfg.ksampler, &incumbent, &m)?;
                Ok((m, w))
            });
            match sampled {
                Ok((m, w)) => {
                    record.mutation = Some(m.to_string());
                    let hash = w.canonical_hash();
                    candidates.push(Some((m, w, hash)));
                }
                Err(e) => {
                    record.skipped = Some(e.to_string());
                    candidates.push(None);
                }
            }
            records.push(record);
        }

        // Evaluate each distinct uncached workflow once.
        let mut pending: Vec<&str> = Vec::new();
        let mut pending_workflows: Vec<&Workflow> = Vec::new();
        for (_, w, hash) in candidates.iter().flatten() {
            if !cache.contains_key(hash.as_str()) && !pending.contains(&hash.as_str()) {
                pending.push(hash);
                pending_workflows.push(w);
            }
        }
        let results = evaluator.evaluate_batch(&pending_workflows, ctx);
        evaluations_used += pending_workflows.len();
        let mut errors: BTreeMap<&str, EvalError> = BTreeMap::new();
        for (hash, result) in pending.iter().zip(results) {
            match result {
                Ok(score) => {
                    cache.insert((*hash).to_string(), score);
                }
                Err(e) => {
                    if e.is_fatal() && failure.is_none() {
                        failure = Some(e.to_string());
                    }
                    errors.insert(hash, e);
                }
            }
        }

        let mut best: Option<(usize, Score)> = None;
        for (i, candidate) in candidates.iter().enumerate() {
            let Some((_, _, hash)) = candidate else { continue };
            if let Some(score) = cache.get(hash.as_str()) {
                records[i].score = Some(score.value());
                if best.is_none_or(|(_, b)| score.value() > b.value()) {
                    best = Some((i, *score));
                }
            } else if let Some(e) = errors.get(hash.as_str()) {
                records[i].skipped = Some(e.to_string());
            }
        }

        let before = incumbent_score.value();
        let mut record = GenerationRecord {
            generation,
            incumbent_score_before: before,
            candidates: records,
            best_candidate_score: best.map(|(_, s)| s.value()),
            accepted: None,
            incumbent_score_after: before,
        };

        if failure.is_some() {
            observer.generation(&record);
            generations.push(record);
            termination = TerminationReason::BackendFailure;
            break;
        }

        match best {
            Some((i, score)) if score.value() > before => {
                let (m, w, _) = candidates.swap_remove(i).expect("scored slot has a candidate");
                record.accepted = Some(m.clone());
                record.incumbent_score_after = score.value();
                patch.push(m);
                incumbent = w;
                incumbent_score = score;
                observer.generation(&record);
                generations.push(record);
            }
            _ => {
                observer.generation(&record);
                generations.push(record);
                termination = TerminationReason::NoImprovement;
                break;
            }
        }
    }

    patch.metadata.final_score = Some(incumbent_score.value());
    Ok(RunResult {
        initial_score: initial_score.value(),
        final_score: incumbent_score.value(),
        initial_workflow: initial,
        final_workflow: incumbent,
        patch,
        generations,
        evaluations_used,
        termination_reason: termination,
        failure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defaults::default_workflow;
    use crate::eval::{ConstantEvaluator, EvalErrorKind};
    use crate::llm::ScriptedLlm;
    use alloc::vec;

    fn llm() -> ScriptedLlm {
        ScriptedLlm::new(vec!["masterpiece".into()], vec!["blurry".into()])
    }

    #[test]
    fn plan_sizes() {
        let cfg = SearchConfig::default();
        assert_eq!(neighbor_plan(&cfg, 1).len(), 150);
        let one = SearchConfig {
            neighbors_per_operator: 1,
            enabled_operators: vec![MutationKind::Ksampler],
            ..SearchConfig::default()
        };
        let plan = neighbor_plan(&one, 3);
        assert_eq!(plan.len(), 1);
        assert_eq!(plan[0].operator, MutationKind::Ksampler);
        assert_eq!(plan[0].side, None);
        assert_eq!(neighbor_plan(&cfg, 4), neighbor_plan(&cfg, 4));
        assert_ne!(neighbor_plan(&cfg, 4), neighbor_plan(&cfg, 5));
    }

    #[test]
    fn plan_uses_fixed_operator_order() {
        let cfg = SearchConfig {
            neighbors_per_operator: 2,
            enabled_operators: vec![MutationKind::PromptLlm, MutationKind::Checkpoint],
            ..SearchConfig::default()
        };
        let ops: Vec<_> = neighbor_plan(&cfg, 1).iter().map(|s| s.operator).collect();
        assert_eq!(
            ops,
            [MutationKind::Checkpoint, MutationKind::Checkpoint, MutationKind::PromptLlm, MutationKind::PromptLlm]
        );
        let sides: Vec<_> = neighbor_plan(&cfg, 1).iter().map(|s| s.side).collect();
        assert_eq!(sides[2], Some(PromptSide::Positive));
        assert_eq!(sides[3], Some(PromptSide::Negative));
    }

    #[test]
    fn constant_evaluator_stops_after_first_generation() {
        let r = run_hill_climb(
            &default_workflow(),
            &SearchConfig::default(),
            &MutationConfig::default(),
            &ConstantEvaluator(0.0),
            &llm(),
            &EvalContext::default(),
        )
        .unwrap();
        assert_eq!(r.generations.len(), 1);
        assert!(r.patch.is_empty());
        assert_eq!(r.termination_reason, TerminationReason::NoImprovement);
        assert_eq!(r.final_score, r.initial_score);
    }

    #[test]
    fn invalid_config_and_baseline() {
        let bad = SearchConfig { neighbors_per_operator: 0, ..SearchConfig::default() };
        let run = |cfg: &SearchConfig, w: &Workflow| {
            run_hill_climb(w, cfg, &MutationConfig::default(), &ConstantEvaluator(0.0), &llm(), &EvalContext::default())
        };
        assert!(matches!(run(&bad, &default_workflow()), Err(SearchError::Config(_))));
        let none = SearchConfig { enabled_operators: vec![], ..SearchConfig::default() };
        assert!(matches!(run(&none, &default_workflow()), Err(SearchError::Config(_))));
        let w = default_workflow().set_field("3", "cfg", InputValue::Real(30.0)).unwrap();
        assert!(matches!(run(&SearchConfig::default(), &w), Err(SearchError::InvalidBaseline(_))));
    }

    /// Scores the KSampler step count; unreachable once steps exceed a limit.
    struct StepsThenDown(i64);
    impl Evaluator for StepsThenDown {
        fn evaluate(&self, w: &Workflow, _: &EvalContext) -> Result<Score, EvalError> {
            let steps = w.get_field("3", "steps").unwrap().unwrap().as_i64().unwrap();
            if steps > self.0 {
                return Err(EvalError::new(EvalErrorKind::Unreachable, "gone"));
            }
            Score::new(steps as f64)
        }
    }

    #[test]
    fn fatal_failure_keeps_partial_result() {
        let cfg = SearchConfig { enabled_operators: vec![MutationKind::Ksampler], ..SearchConfig::default() };
        let r = run_hill_climb(
            &default_workflow(),
            &cfg,
            &MutationConfig::default(),
            &StepsThenDown(100),
            &llm(),
            &EvalContext::default(),
        )
        .unwrap();
        assert_eq!(r.termination_reason, TerminationReason::BackendFailure);
        assert!(r.failure.is_some());
        assert_eq!(r.generations.len(), 1);
        assert!(r.patch.is_empty());
    }

    #[test]
    fn max_generations_cap() {
        // Counts KSampler fields changed from the baseline.
        struct Changed(Workflow);
        impl Evaluator for Changed {
            fn evaluate(&self, w: &Workflow, _: &EvalContext) -> Result<Score, EvalError> {
                let base = self.0.node("3").unwrap();
                let n = w.node("3").unwrap().inputs.iter().filter(|(k, v)| base.inputs.get(*k) != Some(v)).count();
                Score::new(n as f64)
            }
        }
        let cfg = SearchConfig {
            enabled_operators: vec![MutationKind::Ksampler],
            max_generations: 2,
            neighbors_per_operator: 30,
            ..SearchConfig::default()
        };
        let r = run_hill_climb(
            &default_workflow(),
            &cfg,
            &MutationConfig::default(),
            &Changed(default_workflow()),
            &llm(),
            &EvalContext::default(),
        )
        .unwrap();
        assert_eq!(r.termination_reason, TerminationReason::MaxGenerations);
        assert_eq!(r.generations.len(), 2);
        assert_eq!(r.patch.len(), 2);
        assert!(r.evaluations_used <= 2 * 30 + 1);
    }
}
