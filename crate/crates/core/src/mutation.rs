//! The five mutation operators: sampling fully materialized mutations and
//! applying them to workflows.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::defaults::{self, KsamplerDomain};
use crate::llm::{self, LlmBackend, LlmError, LlmRequest, PromptSide};
use crate::rng::{quantize, SearchRng};
use crate::text::{self, IndexOutOfRange, StatementEdit, WordEdit};
use crate::workflow::{
    InputValue, Workflow, WorkflowError, WorkflowRoles, CHECKPOINT_LOADER, CLIP_TEXT_ENCODE, KSAMPLER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationKind {
    Checkpoint,
    Ksampler,
    PromptWord,
    PromptStatement,
    PromptLlm,
}

impl MutationKind {
    /// Fixed operator order used when planning and tie-breaking.
    pub const ALL: [MutationKind; 5] = [
        MutationKind::Checkpoint,
        MutationKind::Ksampler,
        MutationKind::PromptWord,
        MutationKind::PromptStatement,
        MutationKind::PromptLlm,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MutationKind::Checkpoint => "checkpoint",
            MutationKind::Ksampler => "ksampler",
            MutationKind::PromptWord => "prompt_word",
            MutationKind::PromptStatement => "prompt_statement",
            MutationKind::PromptLlm => "prompt_llm",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == name)
    }

    /// Operators that edit a prompt take a positive/negative target.
    pub fn targets_prompt(self) -> bool {
        matches!(self, MutationKind::PromptWord | MutationKind::PromptStatement | MutationKind::PromptLlm)
    }
}

impl fmt::Display for MutationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KsamplerProperty {
    Seed,
    Steps,
    Cfg,
    SamplerName,
    Scheduler,
    Denoise,
}

impl KsamplerProperty {
    pub const ALL: [KsamplerProperty; 6] = [
        KsamplerProperty::Seed,
        KsamplerProperty::Steps,
        KsamplerProperty::Cfg,
        KsamplerProperty::SamplerName,
        KsamplerProperty::Scheduler,
        KsamplerProperty::Denoise,
    ];

    pub fn field(self) -> &'static str {
        match self {
            KsamplerProperty::Seed => "seed",
            KsamplerProperty::Steps => "steps",
            KsamplerProperty::Cfg => "cfg",
            KsamplerProperty::SamplerName => "sampler_name",
            KsamplerProperty::Scheduler => "scheduler",
            KsamplerProperty::Denoise => "denoise",
        }
    }

    pub fn from_field(field: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.field() == field)
    }
}

/// A KSampler property together with its new value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "property", content = "value", rename_all = "snake_case")]
pub enum KsamplerSetting {
    Seed(u64),
    Steps(u32),
    Cfg(f64),
    SamplerName(String),
    Scheduler(String),
    Denoise(f64),
}

impl KsamplerSetting {
    pub fn property(&self) -> KsamplerProperty {
        match self {
            KsamplerSetting::Seed(_) => KsamplerProperty::Seed,
            KsamplerSetting::Steps(_) => KsamplerProperty::Steps,
            KsamplerSetting::Cfg(_) => KsamplerProperty::Cfg,
            KsamplerSetting::SamplerName(_) => KsamplerProperty::SamplerName,
            KsamplerSetting::Scheduler(_) => KsamplerProperty::Scheduler,
            KsamplerSetting::Denoise(_) => KsamplerProperty::Denoise,
        }
    }

    pub fn to_input(&self) -> InputValue {
        match self {
            KsamplerSetting::Seed(v) => InputValue::Int(*v as i64),
            KsamplerSetting::Steps(v) => InputValue::Int(i64::from(*v)),
            KsamplerSetting::Cfg(v) | KsamplerSetting::Denoise(v) => InputValue::Real(*v),
            KsamplerSetting::SamplerName(s) | KsamplerSetting::Scheduler(s) => InputValue::Text(s.clone()),
        }
    }

    /// Draws a value for `property` from `domain`.
    pub fn sample(property: KsamplerProperty, domain: &KsamplerDomain, rng: &mut SearchRng) -> Self {
        match property {
            KsamplerProperty::Seed => KsamplerSetting::Seed(rng.int_inclusive(0, domain.seed_max as i64) as u64),
            KsamplerProperty::Steps => {
                KsamplerSetting::Steps(rng.int_inclusive(1, i64::from(domain.steps_end) - 1) as u32)
            }
            // Drawn on the 0.1 grid directly so the half-open upper bound holds.
            KsamplerProperty::Cfg => {
                let tenths = libm::ceil(domain.cfg_end * 10.0) as i64;
                KsamplerSetting::Cfg(rng.int_inclusive(0, tenths - 1) as f64 / 10.0)
            }
            KsamplerProperty::SamplerName => {
                KsamplerSetting::SamplerName(rng.choose(&domain.samplers).cloned().unwrap_or_default())
            }
            KsamplerProperty::Scheduler => {
                KsamplerSetting::Scheduler(rng.choose(&domain.schedulers).cloned().unwrap_or_default())
            }
            KsamplerProperty::Denoise => KsamplerSetting::Denoise(quantize(rng.real_inclusive(0.0, 1.0), 2)),
        }
    }
}

impl fmt::Display for KsamplerSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let field = self.property().field();
        match self {
            KsamplerSetting::Seed(v) => write!(f, "{field}={v}"),
            KsamplerSetting::Steps(v) => write!(f, "{field}={v}"),
            KsamplerSetting::Cfg(v) | KsamplerSetting::Denoise(v) => write!(f, "{field}={v}"),
            KsamplerSetting::SamplerName(s) | KsamplerSetting::Scheduler(s) => {
                write!(f, "{field}={s}")
            }
        }
    }
}

/// Kind-specific payload of a mutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MutationOp {
    Checkpoint {
        ckpt_name: String,
    },
    Ksampler(KsamplerSetting),
    PromptWord(WordEdit),
    PromptStatement(StatementEdit),
    /// The rewritten prompt is stored so replay never queries an LLM.
    PromptLlm {
        model: String,
        seed: u64,
        temperature: f64,
        text: String,
    },
}

/// One atomic, fully materialized edit of a single workflow node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mutation {
    pub target: String,
    #[serde(flatten)]
    pub op: MutationOp,
}

impl Mutation {
    pub fn new(target: impl Into<String>, op: MutationOp) -> Self {
        Mutation { target: target.into(), op }
    }

    pub fn kind(&self) -> MutationKind {
        match self.op {
            MutationOp::Checkpoint { .. } => MutationKind::Checkpoint,
            MutationOp::Ksampler(_) => MutationKind::Ksampler,
            MutationOp::PromptWord(_) => MutationKind::PromptWord,
            MutationOp::PromptStatement(_) => MutationKind::PromptStatement,
            MutationOp::PromptLlm { .. } => MutationKind::PromptLlm,
        }
    }
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} @{}: ", self.kind(), self.target)?;
        match &self.op {
            MutationOp::Checkpoint { ckpt_name } => write!(f, "ckpt_name={ckpt_name}"),
            MutationOp::Ksampler(setting) => write!(f, "{setting}"),
            MutationOp::PromptWord(edit) => write!(f, "{edit:?}"),
            MutationOp::PromptStatement(edit) => write!(f, "{edit:?}"),
            MutationOp::PromptLlm { model, seed, temperature, text } => {
                write!(f, "{model} seed={seed} temperature={temperature} -> {text:?}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MutationError {
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error("checkpoint pool needs at least two entries, has {0}")]
    PoolTooSmall(usize),
    #[error("no feasible {kind} mutation: {reason}")]
    Infeasible { kind: MutationKind, reason: String },
    #[error("LLM rewrite failed: {0}")]
    Llm(#[from] LlmError),
    #[error("node {node} is {found}, expected {expected}")]
    WrongTarget { node: String, found: String, expected: &'static str },
    #[error("node {node} has no text prompt")]
    MissingPrompt { node: String },
    #[error(transparent)]
    Index(#[from] IndexOutOfRange),
    #[error("{field} value {value} outside {domain}")]
    OutOfDomain { field: &'static str, value: String, domain: &'static str },
    #[error("invalid mutation config: {0}")]
    Config(String),
}

impl MutationError {
    /// Errors that mean "skip this neighbor slot" rather than a broken setup.
    pub fn is_infeasible(&self) -> bool {
        matches!(self, MutationError::Infeasible { .. } | MutationError::Llm(_))
    }

    fn infeasible(kind: MutationKind, reason: impl Into<String>) -> Self {
        MutationError::Infeasible { kind, reason: reason.into() }
    }
}

/// Pools, model lists and value domains the operators draw from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationConfig {
    pub checkpoint_pool: Vec<String>,
    pub positive_statement_pool: Vec<String>,
    pub negative_statement_pool: Vec<String>,
    pub llm_models: Vec<String>,
    pub llm_temperature_range: [f64; 2],
    pub ksampler: KsamplerDomain,
}

impl Default for MutationConfig {
    fn default() -> Self {
        MutationConfig {
            checkpoint_pool: defaults::checkpoint_pool(),
            positive_statement_pool: defaults::parse_statement_pool(defaults::POSITIVE_STATEMENTS),
            negative_statement_pool: defaults::parse_statement_pool(defaults::NEGATIVE_STATEMENTS),
            llm_models: defaults::LLM_MODELS.iter().map(|s| s.to_string()).collect(),
            llm_temperature_range: [0.2, 1.2],
            ksampler: KsamplerDomain::default(),
        }
    }
}

impl MutationConfig {
    pub fn statement_pool(&self, side: PromptSide) -> &[String] {
        match side {
            PromptSide::Positive => &self.positive_statement_pool,
            PromptSide::Negative => &self.negative_statement_pool,
        }
    }

    /// Checks the pools required by the enabled operators.
    pub fn validate(&self, enabled: &[MutationKind]) -> Result<(), MutationError> {
        for kind in enabled {
            match kind {
                MutationKind::Checkpoint if self.checkpoint_pool.len() < 2 => {
                    return Err(MutationError::PoolTooSmall(self.checkpoint_pool.len()));
                }
                MutationKind::Ksampler if self.ksampler.samplers.is_empty() || self.ksampler.schedulers.is_empty() => {
                    return Err(MutationError::Config("empty sampler or scheduler list".into()));
                }
                MutationKind::PromptStatement
                    if self.positive_statement_pool.is_empty() || self.negative_statement_pool.is_empty() =>
                {
                    return Err(MutationError::Config("empty statement pool".into()));
                }
                MutationKind::PromptLlm => {
                    let [lo, hi] = self.llm_temperature_range;
                    if self.llm_models.is_empty() {
                        return Err(MutationError::Config("empty LLM model list".into()));
                    }
                    if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= 0.0) {
                        return Err(MutationError::Config("bad temperature range".into()));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn prompt_target(roles: &WorkflowRoles, side: PromptSide) -> &str {
    match side {
        PromptSide::Positive => &roles.positive_prompt_id,
        PromptSide::Negative => &roles.negative_prompt_id,
    }
}

fn current_prompt<'w>(w: &'w Workflow, node: &str) -> Result<&'w str, MutationError> {
    w.node(node).ok_or_else(|| WorkflowError::UnknownNode(node.into()))?;
    w.prompt_text(node).ok_or_else(|| MutationError::MissingPrompt { node: node.into() })
}

/// Swaps the checkpoint for a uniformly chosen different one.
pub fn sample_checkpoint_mutation(
    w: &Workflow,
    roles: &WorkflowRoles,
    cfg: &MutationConfig,
    rng: &mut SearchRng,
) -> Result<Mutation, MutationError> {
    if cfg.checkpoint_pool.len() < 2 {
        return Err(MutationError::PoolTooSmall(cfg.checkpoint_pool.len()));
    }
    let current = w.get_field(&roles.checkpoint_id, "ckpt_name")?.and_then(InputValue::as_text);
    let alternatives: Vec<&String> = cfg.checkpoint_pool.iter().filter(|c| Some(c.as_str()) != current).collect();
    let pick = rng
        .choose(&alternatives)
        .ok_or_else(|| MutationError::infeasible(MutationKind::Checkpoint, "no alternative checkpoint"))?;
    Ok(Mutation::new(roles.checkpoint_id.clone(), MutationOp::Checkpoint { ckpt_name: (*pick).clone() }))
}

/// Changes one uniformly chosen KSampler property. A value equal to the
/// current one is redrawn once, then kept.
pub fn sample_ksampler_mutation(
    w: &Workflow,
    roles: &WorkflowRoles,
    cfg: &MutationConfig,
    rng: &mut SearchRng,
) -> Result<Mutation, MutationError> {
    let property = KsamplerProperty::ALL[rng.index(KsamplerProperty::ALL.len())];
    let current = w.get_field(&roles.ksampler_id, property.field())?.cloned();
    let mut setting = KsamplerSetting::sample(property, &cfg.ksampler, rng);
    if current.as_ref() == Some(&setting.to_input()) {
        setting = KsamplerSetting::sample(property, &cfg.ksampler, rng);
    }
    Ok(Mutation::new(roles.ksampler_id.clone(), MutationOp::Ksampler(setting)))
}

/// Removes, switches or copies a word of the chosen prompt.
pub fn sample_prompt_word_mutation(
    w: &Workflow,
    roles: &WorkflowRoles,
    side: PromptSide,
    rng: &mut SearchRng,
) -> Result<Mutation, MutationError> {
    let target = prompt_target(roles, side);
    let n = text::split_words(current_prompt(w, target)?).len();
    let edit = match n {
        0 => {
            return Err(MutationError::infeasible(MutationKind::PromptWord, "empty prompt"));
        }
        1 => WordEdit::Copy { from: 0, to: rng.index(2) },
        _ => match rng.index(3) {
            0 => WordEdit::Remove { index: rng.index(n) },
            1 => {
                let (first, second) = rng.distinct_pair(n);
                WordEdit::Switch { first, second }
            }
            _ => {
                let from = rng.index(n);
                WordEdit::Copy { from, to: rng.index(n + 1) }
            }
        },
    };
    Ok(Mutation::new(target, MutationOp::PromptWord(edit)))
}

#[derive(Clone, Copy)]
enum StatementAction {
    Remove,
    Switch,
    Copy,
    Add,
    Replace,
}

/// Edits a comma-separated statement of the chosen prompt, drawing new
/// statements from the pool matching the prompt side.
pub fn sample_prompt_statement_mutation(
    w: &Workflow,
    roles: &WorkflowRoles,
    side: PromptSide,
    cfg: &MutationConfig,
    rng: &mut SearchRng,
) -> Result<Mutation, MutationError> {
    let target = prompt_target(roles, side);
    let n = text::split_statements(current_prompt(w, target)?).len();
    let pool = cfg.statement_pool(side);

    let mut feasible = Vec::with_capacity(5);
    if n >= 2 {
        feasible.push(StatementAction::Remove);
        feasible.push(StatementAction::Switch);
    }
    if n >= 1 {
        feasible.push(StatementAction::Copy);
    }
    if !pool.is_empty() {
        feasible.push(StatementAction::Add);
        if n >= 1 {
            feasible.push(StatementAction::Replace);
        }
    }
    let Some(&action) = rng.choose(&feasible) else {
        return Err(MutationError::infeasible(MutationKind::PromptStatement, "empty prompt and empty statement pool"));
    };
    let edit = match action {
        StatementAction::Remove => StatementEdit::Remove { index: rng.index(n) },
        StatementAction::Switch => {
            let (first, second) = rng.distinct_pair(n);
            StatementEdit::Switch { first, second }
        }
        StatementAction::Copy => {
            let from = rng.index(n);
            StatementEdit::Copy { from, to: rng.index(n + 1) }
        }
        StatementAction::Add => {
            let statement = pool[rng.index(pool.len())].clone();
            StatementEdit::Add { position: rng.index(n + 1), statement }
        }
        StatementAction::Replace => {
            let index = rng.index(n);
            let statement = pool[rng.index(pool.len())].clone();
            StatementEdit::Replace { index, statement }
        }
    };
    Ok(Mutation::new(target, MutationOp::PromptStatement(edit)))
}

/// Asks an LLM to rewrite the chosen prompt with a random model, seed and
/// temperature. The normalized response is stored in the mutation.
pub fn sample_prompt_llm_mutation(
    w: &Workflow,
    roles: &WorkflowRoles,
    side: PromptSide,
    cfg: &MutationConfig,
    rng: &mut SearchRng,
    backend: &dyn LlmBackend,
) -> Result<Mutation, MutationError> {
    let target = prompt_target(roles, side);
    let prompt = current_prompt(w, target)?;
    let model =
        rng.choose(&cfg.llm_models).cloned().ok_or_else(|| MutationError::Config("empty LLM model list".into()))?;
    let seed = rng.int_inclusive(0, 100_000) as u64;
    let [lo, hi] = cfg.llm_temperature_range;
    let temperature = quantize(rng.real_inclusive(lo, hi), 2).clamp(lo, hi);

    let request = LlmRequest { model: model.clone(), seed, temperature, prompt: llm::render_request(side, prompt) };
    let text = llm::normalize_response(&backend.complete(&request)?);
    if text.is_empty() {
        return Err(MutationError::Llm(LlmError::EmptyResponse));
    }
    Ok(Mutation::new(target, MutationOp::PromptLlm { model, seed, temperature, text }))
}

fn expect_class(w: &Workflow, node: &str, expected: &'static str) -> Result<(), MutationError> {
    let n = w.node(node).ok_or_else(|| WorkflowError::UnknownNode(node.into()))?;
    if n.class_type != expected {
        return Err(MutationError::WrongTarget { node: node.into(), found: n.class_type.clone(), expected });
    }
    Ok(())
}

/// Applies `m` with the default KSampler domain.
pub fn apply_mutation(w: &Workflow, m: &Mutation) -> Result<Workflow, MutationError> {
    apply_mutation_in(&KsamplerDomain::default(), w, m)
}

/// Returns a copy of `w` with exactly the fields targeted by `m` changed.
pub fn apply_mutation_in(domain: &KsamplerDomain, w: &Workflow, m: &Mutation) -> Result<Workflow, MutationError> {
    let node = m.target.as_str();
    let (field, value) = match &m.op {
        MutationOp::Checkpoint { ckpt_name } => {
            expect_class(w, node, CHECKPOINT_LOADER)?;
            ("ckpt_name", InputValue::Text(ckpt_name.clone()))
        }
        MutationOp::Ksampler(setting) => {
            expect_class(w, node, KSAMPLER)?;
            let value = setting.to_input();
            let property = setting.property();
            domain.contains(property, &value).map_err(|d| MutationError::OutOfDomain {
                field: property.field(),
                value: format!("{setting}"),
                domain: d,
            })?;
            (property.field(), value)
        }
        MutationOp::PromptWord(edit) => {
            expect_class(w, node, CLIP_TEXT_ENCODE)?;
            ("text", InputValue::Text(edit.apply(current_prompt(w, node)?)?))
        }
        MutationOp::PromptStatement(edit) => {
            expect_class(w, node, CLIP_TEXT_ENCODE)?;
            ("text", InputValue::Text(edit.apply(current_prompt(w, node)?)?))
        }
        MutationOp::PromptLlm { text, .. } => {
            expect_class(w, node, CLIP_TEXT_ENCODE)?;
            ("text", InputValue::Text(text.clone()))
        }
    };
    Ok(w.set_field(node, field, value)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defaults::default_workflow;
    use crate::llm::ScriptedLlm;
    use alloc::vec;

    fn setup() -> (Workflow, WorkflowRoles, MutationConfig) {
        let w = default_workflow();
        let roles = w.resolve_roles().unwrap();
        (w, roles, MutationConfig::default())
    }

    #[test]
    fn checkpoint_forced_choice() {
        let (w, roles, mut cfg) = setup();
        cfg.checkpoint_pool = vec!["v1-5-pruned.safetensors".into(), "B".into()];
        let mut rng = SearchRng::from_seed(0);
        for _ in 0..20 {
            let m = sample_checkpoint_mutation(&w, &roles, &cfg, &mut rng).unwrap();
            assert_eq!(m.op, MutationOp::Checkpoint { ckpt_name: "B".into() });
        }
        cfg.checkpoint_pool.truncate(1);
        assert_eq!(sample_checkpoint_mutation(&w, &roles, &cfg, &mut rng), Err(MutationError::PoolTooSmall(1)));
    }

    #[test]
    fn ksampler_cfg_mutation_changes_only_cfg() {
        let (w, _, _) = setup();
        let m = Mutation::new("3", MutationOp::Ksampler(KsamplerSetting::Cfg(7.5)));
        let out = apply_mutation(&w, &m).unwrap();
        assert_eq!(out.get_field("3", "cfg").unwrap(), Some(&InputValue::Real(7.5)));
        let expected = w.set_field("3", "cfg", InputValue::Real(7.5)).unwrap();
        assert_eq!(out, expected);
    }

    #[test]
    fn apply_rejects_out_of_domain() {
        let (w, _, _) = setup();
        let m = Mutation::new("3", MutationOp::Ksampler(KsamplerSetting::Steps(200)));
        assert!(matches!(apply_mutation(&w, &m), Err(MutationError::OutOfDomain { .. })));
        let m = Mutation::new("4", MutationOp::Ksampler(KsamplerSetting::Steps(20)));
        assert!(matches!(apply_mutation(&w, &m), Err(MutationError::WrongTarget { .. })));
        let m = Mutation::new("42", MutationOp::Checkpoint { ckpt_name: "x".into() });
        assert!(matches!(apply_mutation(&w, &m), Err(MutationError::Workflow(_))));
    }

    #[test]
    fn checkpoint_application_is_idempotent() {
        let (w, _, _) = setup();
        let m = Mutation::new("4", MutationOp::Checkpoint { ckpt_name: "x.safetensors".into() });
        let once = apply_mutation(&w, &m).unwrap();
        let twice = apply_mutation(&once, &m).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn prompt_index_out_of_range_fails() {
        let (w, _, _) = setup();
        let m = Mutation::new("7", MutationOp::PromptWord(WordEdit::Remove { index: 9 }));
        assert!(matches!(apply_mutation(&w, &m), Err(MutationError::Index(_))));
    }

    #[test]
    fn one_word_prompt_only_copies() {
        let (w, roles, _) = setup();
        let w = w.set_field("7", "text", InputValue::Text("blurry".into())).unwrap();
        let mut rng = SearchRng::from_seed(9);
        for _ in 0..50 {
            let m = sample_prompt_word_mutation(&w, &roles, PromptSide::Negative, &mut rng).unwrap();
            assert!(matches!(m.op, MutationOp::PromptWord(WordEdit::Copy { .. })));
        }
        let empty = w.set_field("7", "text", InputValue::Text("  ".into())).unwrap();
        let err = sample_prompt_word_mutation(&empty, &roles, PromptSide::Negative, &mut rng).unwrap_err();
        assert!(err.is_infeasible());
    }

    #[test]
    fn statement_empty_prompt_and_pool_is_infeasible() {
        let (w, roles, mut cfg) = setup();
        let w = w.set_field("7", "text", InputValue::Text("".into())).unwrap();
        cfg.negative_statement_pool.clear();
        let mut rng = SearchRng::from_seed(1);
        let err = sample_prompt_statement_mutation(&w, &roles, PromptSide::Negative, &cfg, &mut rng).unwrap_err();
        assert!(err.is_infeasible());

        cfg.negative_statement_pool = vec!["ultra realistic".into()];
        let m = sample_prompt_statement_mutation(&w, &roles, PromptSide::Negative, &cfg, &mut rng).unwrap();
        assert_eq!(
            m.op,
            MutationOp::PromptStatement(StatementEdit::Add { position: 0, statement: "ultra realistic".into() })
        );
        assert_eq!(apply_mutation(&w, &m).unwrap().prompt_text("7"), Some("ultra realistic"));
    }

    #[test]
    fn statement_pool_follows_side() {
        let (w, roles, mut cfg) = setup();
        cfg.positive_statement_pool = vec!["POS".into()];
        cfg.negative_statement_pool = vec!["NEG".into()];
        let mut rng = SearchRng::from_seed(5);
        for _ in 0..200 {
            for (side, bad) in [(PromptSide::Positive, "NEG"), (PromptSide::Negative, "POS")] {
                let m = sample_prompt_statement_mutation(&w, &roles, side, &cfg, &mut rng).unwrap();
                if let MutationOp::PromptStatement(
                    StatementEdit::Add { statement, .. } | StatementEdit::Replace { statement, .. },
                ) = &m.op
                {
                    assert_ne!(statement, bad);
                }
            }
        }
    }

    struct Failing;
    impl LlmBackend for Failing {
        fn complete(&self, _: &LlmRequest) -> Result<String, LlmError> {
            Err(LlmError::Unreachable("connection refused".into()))
        }
    }

    struct Quoted;
    impl LlmBackend for Quoted {
        fn complete(&self, _: &LlmRequest) -> Result<String, LlmError> {
            Ok("\"a gothic cathedral, golden arches\"".into())
        }
    }

    #[test]
    fn llm_mutation_materializes_text() {
        let (w, roles, cfg) = setup();
        let mut rng = SearchRng::from_seed(11);
        let m = sample_prompt_llm_mutation(&w, &roles, PromptSide::Positive, &cfg, &mut rng, &Quoted).unwrap();
        let MutationOp::PromptLlm { model, seed, temperature, text } = &m.op else { panic!() };
        assert_eq!(text, "a gothic cathedral, golden arches");
        assert!(cfg.llm_models.contains(model));
        assert!(*seed <= 100_000);
        assert!((0.2..=1.2).contains(temperature));
        assert_eq!(quantize(*temperature, 2), *temperature);

        let err = sample_prompt_llm_mutation(&w, &roles, PromptSide::Positive, &cfg, &mut rng, &Failing).unwrap_err();
        assert!(err.is_infeasible());
    }

    #[test]
    fn scripted_llm_concatenation() {
        let (w, roles, cfg) = setup();
        let llm = ScriptedLlm::new(vec!["masterpiece".into()], vec!["blurry".into()]);
        let mut rng = SearchRng::from_seed(2);
        let m = sample_prompt_llm_mutation(&w, &roles, PromptSide::Negative, &cfg, &mut rng, &llm).unwrap();
        let out = apply_mutation(&w, &m).unwrap();
        assert_eq!(out.prompt_text("7"), Some("text, watermark, blurry"));
    }

    #[test]
    fn wire_format() {
        let m = Mutation::new("3", MutationOp::Ksampler(KsamplerSetting::Cfg(7.5)));
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"target":"3","kind":"ksampler","property":"cfg","value":7.5}"#);
        assert_eq!(serde_json::from_str::<Mutation>(&s).unwrap(), m);

        let m =
            Mutation::new("6", MutationOp::PromptStatement(StatementEdit::Add { position: 1, statement: "8k".into() }));
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"target":"6","kind":"prompt_statement","action":"add","position":1,"statement":"8k"}"#);
        assert_eq!(serde_json::from_str::<Mutation>(&s).unwrap(), m);

        assert!(serde_json::from_str::<Mutation>(r#"{"target":"3","kind":"teleport"}"#).is_err());
    }
}
