//! Search engine for improving ComfyUI text-to-image workflows.
//!
//! A workflow in ComfyUI API format is treated as the genotype of a hill
//! climber. Each generation samples single-mutation neighbors of the current
//! incumbent with five operators (checkpoint swap, KSampler property change,
//! prompt word edit, prompt statement edit, LLM prompt rewrite), scores them
//! with an [`Evaluator`](eval::Evaluator) and keeps the best strict
//! improvement. Accepted mutations accumulate into a replayable
//! [`Patch`](patch::Patch).
//!
//! The crate is `no_std` and only needs `alloc`. Network backends, file
//! formats and the command line live in the `comfygi` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod defaults;
pub mod eval;
pub mod llm;
pub mod mutation;
pub mod patch;
pub mod rng;
pub mod search;
pub mod text;
pub mod workflow;

pub use eval::{EvalContext, EvalError, EvalErrorKind, Evaluator, Score, SimulatedLandscape};
pub use llm::{LlmBackend, LlmError, LlmRequest, PromptSide};
pub use mutation::{Mutation, MutationConfig, MutationError, MutationKind, MutationOp};
pub use patch::{Patch, PatchError, PatchMetadata};
pub use search::{
    run_hill_climb, run_hill_climb_observed, GenerationRecord, RunResult, SearchConfig, SearchError, SearchObserver,
    TerminationReason,
};
pub use workflow::{InputValue, Node, Workflow, WorkflowError, WorkflowRoles};
