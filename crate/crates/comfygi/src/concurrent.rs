//! Evaluates a batch of candidates on several threads.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use comfygi_core::{EvalContext, EvalError, Evaluator, Score, Workflow};

/// Wraps an evaluator so `evaluate_batch` keeps up to `in_flight` calls
/// running at once. Results stay in input order.
#[derive(Debug, Clone)]
pub struct Concurrent<E> {
    pub inner: E,
    pub in_flight: usize,
}

impl<E: Evaluator> Concurrent<E> {
    pub fn new(inner: E, in_flight: usize) -> Self {
        Concurrent { inner, in_flight: in_flight.max(1) }
    }
}

impl<E: Evaluator> Evaluator for Concurrent<E> {
    fn evaluate(&self, workflow: &Workflow, ctx: &EvalContext) -> Result<Score, EvalError> {
        self.inner.evaluate(workflow, ctx)
    }

    fn is_deterministic(&self) -> bool {
        self.inner.is_deterministic()
    }

    fn evaluate_batch(&self, workflows: &[&Workflow], ctx: &EvalContext) -> Vec<Result<Score, EvalError>> {
        let workers = self.in_flight.min(workflows.len());
        if workers <= 1 {
            return self.inner.evaluate_batch(workflows, ctx);
        }
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<Option<Result<Score, EvalError>>>> = Mutex::new(vec![None; workflows.len()]);
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(w) = workflows.get(i) else { break };
                    let r = self.inner.evaluate(w, ctx);
                    results.lock().expect("result lock")[i] = Some(r);
                });
            }
        });
        results.into_inner().expect("result lock").into_iter().map(|r| r.expect("every index evaluated")).collect()
    }
}
