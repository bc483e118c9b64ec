//! Scoring contract and the deterministic simulated landscape.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::workflow::{Workflow, WorkflowError};

/// A finite reward value. Higher is better.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Score(f64);

impl Score {
    pub fn new(value: f64) -> Result<Self, EvalError> {
        if value.is_finite() {
            Ok(Score(value))
        } else {
            Err(EvalError::new(EvalErrorKind::InvalidScore, "score is not finite"))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Score {
    type Error = EvalError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Score::new(v)
    }
}

impl From<Score> for f64 {
    fn from(s: Score) -> f64 {
        s.0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalErrorKind {
    /// The backend could not be reached at all.
    Unreachable,
    Submission,
    Timeout,
    Fetch,
    Scorer,
    InvalidInput,
    InvalidScore,
    InvalidWorkflow,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind:?} failure: {message}")]
pub struct EvalError {
    pub kind: EvalErrorKind,
    pub message: String,
}

impl EvalError {
    pub fn new(kind: EvalErrorKind, message: impl Into<String>) -> Self {
        EvalError { kind, message: message.into() }
    }

    /// A fatal failure aborts the search; anything else skips one candidate.
    pub fn is_fatal(&self) -> bool {
        self.kind == EvalErrorKind::Unreachable
    }
}

impl From<WorkflowError> for EvalError {
    fn from(e: WorkflowError) -> Self {
        EvalError::new(EvalErrorKind::InvalidWorkflow, e.to_string())
    }
}

/// Per-run evaluation context. `prompt` is the user's original prompt, which
/// scoring always measures against regardless of prompt mutations.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvalContext {
    pub prompt: String,
}

impl EvalContext {
    pub fn new(prompt: impl Into<String>) -> Self {
        EvalContext { prompt: prompt.into() }
    }
}

/// Workflow in, scalar reward out.
pub trait Evaluator: Sync {
    fn evaluate(&self, workflow: &Workflow, ctx: &EvalContext) -> Result<Score, EvalError>;

    /// Whether canonically identical workflows always get identical scores.
    fn is_deterministic(&self) -> bool {
        false
    }

    /// Scores several workflows; results are in input order. The default is
    /// sequential.
    fn evaluate_batch(&self, workflows: &[&Workflow], ctx: &EvalContext) -> Vec<Result<Score, EvalError>> {
        workflows.iter().map(|w| self.evaluate(w, ctx)).collect()
    }
}

impl<T: Evaluator + ?Sized> Evaluator for &T {
    fn evaluate(&self, workflow: &Workflow, ctx: &EvalContext) -> Result<Score, EvalError> {
        (**self).evaluate(workflow, ctx)
    }
    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }
    fn evaluate_batch(&self, workflows: &[&Workflow], ctx: &EvalContext) -> Vec<Result<Score, EvalError>> {
        (**self).evaluate_batch(workflows, ctx)
    }
}

/// Gives every workflow the same score.
#[derive(Debug, Clone, Copy)]
pub struct ConstantEvaluator(pub f64);

impl Evaluator for ConstantEvaluator {
    fn evaluate(&self, _: &Workflow, _: &EvalContext) -> Result<Score, EvalError> {
        Score::new(self.0)
    }
    fn is_deterministic(&self) -> bool {
        true
    }
}

/// A synthetic, noise-free reward surface over workflows:
///
/// ```text
/// score = checkpoint_bonus[ckpt]
///       + (1 - |steps - target_steps| / 199)
///       + (1 - |cfg - target_cfg| / 25)
///       + sum of weights of reward keywords found in the positive prompt
///       - sum of weights of penalty keywords missing from the negative prompt
/// ```
///
/// Keyword matching is case-insensitive substring search; each keyword
/// counts once. Checkpoints absent from `checkpoint_bonus` contribute 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedLandscape {
    pub target_checkpoint: String,
    pub checkpoint_bonus: BTreeMap<String, f64>,
    pub target_steps: u32,
    pub target_cfg: f64,
    pub reward_keywords: BTreeMap<String, f64>,
    pub penalty_keywords: BTreeMap<String, f64>,
    /// Always 0; present so landscape files state it explicitly.
    #[serde(default)]
    pub noise: f64,
}

impl SimulatedLandscape {
    /// Rejects landscapes with noise or non-finite parameters.
    pub fn check(&self) -> Result<(), String> {
        if self.noise != 0.0 {
            return Err("simulated landscape must be noise-free".into());
        }
        let finite = self.target_cfg.is_finite()
            && self
                .checkpoint_bonus
                .values()
                .chain(self.reward_keywords.values())
                .chain(self.penalty_keywords.values())
                .all(|v| v.is_finite());
        if !finite {
            return Err("landscape parameters must be finite".into());
        }
        Ok(())
    }

    pub fn score(&self, w: &Workflow) -> Result<Score, EvalError> {
        let roles = w.resolve_roles()?;
        let invalid = |what: &str| EvalError::new(EvalErrorKind::InvalidWorkflow, what);

        let ckpt = w
            .get_field(&roles.checkpoint_id, "ckpt_name")?
            .and_then(|v| v.as_text())
            .ok_or_else(|| invalid("ckpt_name is not a string"))?;
        let steps = w
            .get_field(&roles.ksampler_id, "steps")?
            .and_then(|v| v.as_f64())
            .ok_or_else(|| invalid("steps is not numeric"))?;
        let cfg = w
            .get_field(&roles.ksampler_id, "cfg")?
            .and_then(|v| v.as_f64())
            .ok_or_else(|| invalid("cfg is not numeric"))?;
        let positive = w.prompt_text(&roles.positive_prompt_id).unwrap_or("").to_lowercase();
        let negative = w.prompt_text(&roles.negative_prompt_id).unwrap_or("").to_lowercase();

        let mut score = self.checkpoint_bonus.get(ckpt).copied().unwrap_or(0.0);
        score += 1.0 - (steps - f64::from(self.target_steps)).abs() / 199.0;
        score += 1.0 - (cfg - self.target_cfg).abs() / 25.0;
        for (keyword, weight) in &self.reward_keywords {
            if positive.contains(&keyword.to_lowercase()) {
                score += weight;
            }
        }
        for (keyword, weight) in &self.penalty_keywords {
            if !negative.contains(&keyword.to_lowercase()) {
                score -= weight;
            }
        }
        Score::new(score)
    }
}

impl Evaluator for SimulatedLandscape {
    fn evaluate(&self, workflow: &Workflow, _: &EvalContext) -> Result<Score, EvalError> {
        self.score(workflow)
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}
