//! Training objectives behind a common trait, looked up by name.

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::network::{ForwardCache, NetworkParams};
use crate::zsl::weighted_mean;

use super::TrainingSet;

/// Loss value, its parameter gradient, and the raw hinge arguments
/// `f(rival) − f(true) + Δ` of every term (active or not).
#[derive(Debug, Clone)]
pub struct LossEval {
    pub loss: f64,
    pub grads: NetworkParams,
    pub hinges: Vec<f64>,
}

/// A hinge ranking objective over transformed name embeddings.
pub trait Objective: Send + Sync {
    fn name(&self) -> &'static str;

    fn needs_profiles(&self) -> bool;

    fn needs_predicates(&self) -> bool;

    /// Size of the example pool that minibatches index into; `None` means the
    /// objective is always evaluated on its full term set.
    fn example_count(&self, set: &TrainingSet) -> Option<usize>;

    /// Loss and gradient over `batch` (indices into the example pool), or over
    /// everything when `batch` is `None`. Includes the `λ‖θ‖²` term.
    fn evaluate(&self, params: &NetworkParams, set: &TrainingSet, batch: Option<&[usize]>) -> Result<LossEval>;
}

/// Name → objective. Lookups are case-insensitive.
pub struct ObjectiveRegistry {
    entries: IndexMap<&'static str, Box<dyn Objective>>,
}

impl Default for ObjectiveRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl ObjectiveRegistry {
    pub fn empty() -> Self {
        Self {
            entries: IndexMap::new(),
        }
    }

    /// `ibt` (image-based) and `pbt` (predicate-based).
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(super::ibt::ImageBased)).expect("fresh registry");
        r.register(Box::new(super::pbt::PredicateBased))
            .expect("fresh registry");
        r
    }

    pub fn register(&mut self, objective: Box<dyn Objective>) -> Result<()> {
        let name = objective.name();
        if self.entries.contains_key(name) {
            return Err(Error::BadConfig(format!("objective `{name}` already registered")));
        }
        self.entries.insert(name, objective);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&dyn Objective> {
        self.entries
            .get(name.to_ascii_lowercase().as_str())
            .map(Box::as_ref)
            .ok_or_else(|| Error::UnknownMode(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }
}

/// Cosine of `(u, w)` with its gradients with respect to both arguments.
pub(crate) fn cosine_with_grads(u: &[f64], w: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let nu2: f64 = u.iter().map(|x| x * x).sum();
    let nw2: f64 = w.iter().map(|x| x * x).sum();
    let inv = 1.0 / (nu2.sqrt() * nw2.sqrt());
    let c = u.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() * inv;
    let du = u.iter().zip(w).map(|(a, b)| b * inv - c * a / nu2).collect();
    let dw = u.iter().zip(w).map(|(a, b)| a * inv - c * b / nw2).collect();
    (c, du, dw)
}

pub(crate) fn axpy(dst: &mut [f64], scale: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

/// Forward caches for every attribute and class name under the current
/// parameters, plus accumulators for the gradients flowing into their outputs.
pub(crate) struct VocabPass {
    pub attrs: Vec<ForwardCache>,
    pub classes: Vec<ForwardCache>,
    pub attr_grads: Vec<Vec<f64>>,
    pub class_grads: Vec<Vec<f64>>,
}

impl VocabPass {
    pub fn forward(params: &NetworkParams, set: &TrainingSet) -> Result<Self> {
        let attrs = set
            .attr_vectors
            .iter()
            .map(|v| params.forward(v))
            .collect::<Result<Vec<_>>>()?;
        let classes = set
            .class_vectors
            .iter()
            .map(|v| params.forward(v))
            .collect::<Result<Vec<_>>>()?;
        let d = params.output_dim();
        Ok(Self {
            attr_grads: vec![vec![0.0; d]; attrs.len()],
            class_grads: vec![vec![0.0; d]; classes.len()],
            attrs,
            classes,
        })
    }

    pub fn attr_outputs(&self) -> Vec<Vec<f64>> {
        self.attrs.iter().map(|c| c.output.clone()).collect()
    }

    pub fn class_output(&self, k: usize) -> &[f64] {
        &self.classes[k].output
    }

    /// Mean-of-transformed-attributes under `weights` (Φ or Ψ).
    pub fn combine(&self, outputs: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
        weighted_mean(outputs, weights)
    }

    /// Routes a gradient on `Σ w_a T_a / Σ w_a` back to the attribute outputs.
    pub fn push_combination_grad(&mut self, weights: &[f64], grad: &[f64]) {
        let total: f64 = weights.iter().sum();
        for (acc, &w) in self.attr_grads.iter_mut().zip(weights) {
            if w != 0.0 {
                axpy(acc, w / total, grad);
            }
        }
    }

    /// Backpropagates all accumulated output gradients through the network.
    pub fn backward(&self, params: &NetworkParams) -> Result<NetworkParams> {
        let mut grads = params.zeros_like();
        let pairs = self
            .attrs
            .iter()
            .zip(&self.attr_grads)
            .chain(self.classes.iter().zip(&self.class_grads));
        for (cache, up) in pairs {
            if up.iter().any(|&g| g != 0.0) {
                params.accumulate_backward(cache, up, &mut grads)?;
            }
        }
        Ok(grads)
    }
}

/// Adds `λ‖θ‖²` and its gradient.
pub(crate) fn add_weight_decay(eval: &mut LossEval, params: &NetworkParams, lambda: f64) {
    if lambda != 0.0 {
        eval.loss += lambda * params.squared_norm();
        eval.grads.add_scaled(params, 2.0 * lambda);
    }
}
