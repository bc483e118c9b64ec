//! Ordered mutation lists applied to a baseline workflow.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::mutation::{apply_mutation, Mutation, MutationError, MutationKind};
use crate::workflow::Workflow;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PatchError {
    #[error("patch baseline hash {expected} does not match workflow hash {found}")]
    HashMismatch { expected: String, found: String },
    #[error("mutation {index} failed: {source}")]
    Mutation { index: usize, source: MutationError },
    #[error("malformed patch: {0}")]
    Malformed(String),
    #[error("unknown mutation kind {0:?}")]
    UnknownKind(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PatchMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub baseline_hash: String,
    pub mutations: Vec<Mutation>,
    #[serde(default)]
    pub metadata: PatchMetadata,
}

impl Patch {
    /// An empty patch anchored to `baseline`.
    pub fn for_baseline(baseline: &Workflow) -> Self {
        Patch { baseline_hash: baseline.canonical_hash(), mutations: Vec::new(), metadata: PatchMetadata::default() }
    }

    pub fn len(&self) -> usize {
        self.mutations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mutations.is_empty()
    }

    pub fn push(&mut self, m: Mutation) {
        self.mutations.push(m);
    }

    /// Left fold of [`apply_mutation`] over the mutations. Unless `force` is
    /// set, `w` must hash to `baseline_hash`.
    pub fn apply(&self, w: &Workflow, force: bool) -> Result<Workflow, PatchError> {
        if !force {
            let found = w.canonical_hash();
            if found != self.baseline_hash {
                return Err(PatchError::HashMismatch { expected: self.baseline_hash.clone(), found });
            }
        }
        self.mutations.iter().enumerate().try_fold(w.clone(), |acc, (index, m)| {
            apply_mutation(&acc, m).map_err(|source| PatchError::Mutation { index, source })
        })
    }

    /// `self` followed by `other`, keeping this patch's baseline and metadata.
    pub fn concat(&self, other: &Patch) -> Patch {
        let mut out = self.clone();
        out.mutations.extend(other.mutations.iter().cloned());
        out
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }

    pub fn from_json(text: &str) -> Result<Self, PatchError> {
        let value: Value = serde_json::from_str(text).map_err(|e| PatchError::Malformed(e.to_string()))?;
        if let Some(mutations) = value.get("mutations").and_then(Value::as_array) {
            for m in mutations {
                match m.get("kind").and_then(Value::as_str) {
                    Some(kind) if MutationKind::parse(kind).is_none() => {
                        return Err(PatchError::UnknownKind(kind.to_string()));
                    }
                    _ => {}
                }
            }
        }
        serde_json::from_value(value).map_err(|e| PatchError::Malformed(e.to_string()))
    }
}
