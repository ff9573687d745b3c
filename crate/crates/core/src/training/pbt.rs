//! Predicate-based training: hinge ranking over ordered class pairs using
//! only the class–attribute predicate matrix.
//!
//! For each class `y` and rival `y' ≠ y` the term is
//! `max(0, g(π_y', y) − g(π_y, y) + Δ(y, y'))`, where `g` is the cosine between
//! the predicate embedding Ψ(π) and the transformed name of `y`.

use crate::error::{Error, Result};
use crate::network::NetworkParams;

use super::objective::{add_weight_decay, axpy, cosine_with_grads, LossEval, Objective, VocabPass};
use super::TrainingSet;

#[derive(Debug, Clone, Copy, Default)]
pub struct PredicateBased;

impl Objective for PredicateBased {
    fn name(&self) -> &'static str {
        "pbt"
    }

    fn needs_profiles(&self) -> bool {
        false
    }

    fn needs_predicates(&self) -> bool {
        true
    }

    fn example_count(&self, _set: &TrainingSet) -> Option<usize> {
        None
    }

    fn evaluate(&self, params: &NetworkParams, set: &TrainingSet, _batch: Option<&[usize]>) -> Result<LossEval> {
        let rows = set.rows.as_ref().ok_or(Error::MissingPredicates)?;
        let weights: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
            .collect();
        if weights.iter().any(|w| w.iter().all(|&x| x == 0.0)) {
            return Err(Error::EmptyIndicator);
        }

        let mut pass = VocabPass::forward(params, set)?;
        let attr_out = pass.attr_outputs();
        let psi: Vec<Vec<f64>> = weights.iter().map(|w| pass.combine(&attr_out, w)).collect();
        let k = psi.len();
        let d = params.output_dim();
        let mut dpsi = vec![vec![0.0; d]; k];

        let mut loss = 0.0;
        let mut hinges = Vec::with_capacity(k * (k - 1));
        for y in 0..k {
            let (g_own, dpsi_own, dy_own) = cosine_with_grads(&psi[y], pass.class_output(y));
            let mut own_weight = 0.0;
            for rival in (0..k).filter(|&r| r != y) {
                let (g_rival, dpsi_rival, dy_rival) = cosine_with_grads(&psi[rival], pass.class_output(y));
                let h = g_rival - g_own + set.margins.get(y, rival);
                hinges.push(h);
                if h > 0.0 {
                    loss += h;
                    axpy(&mut dpsi[rival], 1.0, &dpsi_rival);
                    axpy(&mut pass.class_grads[y], 1.0, &dy_rival);
                    own_weight += 1.0;
                }
            }
            if own_weight > 0.0 {
                axpy(&mut dpsi[y], -own_weight, &dpsi_own);
                axpy(&mut pass.class_grads[y], -own_weight, &dy_own);
            }
        }
        for (w, g) in weights.iter().zip(&dpsi) {
            if g.iter().any(|&x| x != 0.0) {
                pass.push_combination_grad(w, g);
            }
        }

        let grads = pass.backward(params)?;
        let mut eval = LossEval { loss, grads, hinges };
        add_weight_decay(&mut eval, params, set.lambda);
        Ok(eval)
    }
}
