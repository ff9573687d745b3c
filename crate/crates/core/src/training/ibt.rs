//! Image-based training: hinge ranking over training images.
//!
//! For each image `x` of class `t` and each rival class `j ≠ t` the term is
//! `max(0, f(x, j) − f(x, t) + Δ(t, j))` with `f` the cosine between the
//! image embedding Φ(x) and the transformed class-name vector.

use crate::error::{Error, Result};
use crate::network::NetworkParams;

use super::objective::{add_weight_decay, axpy, cosine_with_grads, LossEval, Objective, VocabPass};
use super::TrainingSet;

#[derive(Debug, Clone, Copy, Default)]
pub struct ImageBased;

impl Objective for ImageBased {
    fn name(&self) -> &'static str {
        "ibt"
    }

    fn needs_profiles(&self) -> bool {
        true
    }

    fn needs_predicates(&self) -> bool {
        false
    }

    fn example_count(&self, set: &TrainingSet) -> Option<usize> {
        Some(set.images.len())
    }

    fn evaluate(&self, params: &NetworkParams, set: &TrainingSet, batch: Option<&[usize]>) -> Result<LossEval> {
        if set.images.is_empty() {
            return Err(Error::MissingProfiles);
        }
        let mut pass = VocabPass::forward(params, set)?;
        let attr_out = pass.attr_outputs();
        let k = set.class_vectors.len();
        let all: Vec<usize>;
        let batch = match batch {
            Some(b) => b,
            None => {
                all = (0..set.images.len()).collect();
                &all
            }
        };

        let mut loss = 0.0;
        let mut hinges = Vec::with_capacity(batch.len() * k.saturating_sub(1));
        for &i in batch {
            let image = &set.images[i];
            let t = image.class;
            let phi = pass.combine(&attr_out, &image.weights);
            let (f_true, dphi_true, dy_true) = cosine_with_grads(&phi, pass.class_output(t));
            let mut dphi = vec![0.0; phi.len()];
            let mut true_weight = 0.0;
            for j in (0..k).filter(|&j| j != t) {
                let (f_j, dphi_j, dy_j) = cosine_with_grads(&phi, pass.class_output(j));
                let h = f_j - f_true + set.margins.get(t, j);
                hinges.push(h);
                if h > 0.0 {
                    loss += h;
                    axpy(&mut dphi, 1.0, &dphi_j);
                    axpy(&mut pass.class_grads[j], 1.0, &dy_j);
                    true_weight += 1.0;
                }
            }
            if true_weight > 0.0 {
                axpy(&mut dphi, -true_weight, &dphi_true);
                axpy(&mut pass.class_grads[t], -true_weight, &dy_true);
                pass.push_combination_grad(&image.weights, &dphi);
            }
        }

        let grads = pass.backward(params)?;
        let mut eval = LossEval { loss, grads, hinges };
        add_weight_decay(&mut eval, params, set.lambda);
        Ok(eval)
    }
}
