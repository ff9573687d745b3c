//! Central-difference verification of the analytic objective gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::{init_network, NetworkParams};
use crate::predicates::{hamming_margin, MarginMatrix};

use super::objective::{Objective, ObjectiveRegistry};
use super::{ImageSample, TrainingSet};

pub const FD_STEP: f64 = 1e-5;

/// Hinge arguments closer to zero than this would let a ±step perturbation
/// cross a kink, so such instances are redrawn.
const KINK_CLEARANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GradCheckInstance {
    pub params: NetworkParams,
    pub set: TrainingSet,
}

/// `max_i |a_i − n_i| / max(|a_i|, |n_i|, 1e-8)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// A small random problem: d0∈[4,12], h1∈[3,8], d∈[2,6], A∈[3,8], K∈[3,6],
/// two images per class, margins from random predicate rows.
pub fn random_instance(seed: u64, objective: &dyn Objective) -> Result<GradCheckInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d0 = rng.random_range(4..=12);
    let h1 = rng.random_range(3..=8);
    let d = rng.random_range(2..=6);
    let a = rng.random_range(3..=8);
    let k = rng.random_range(3..=6);

    let vector = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..d0).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let attr_vectors: Vec<Vec<f64>> = (0..a).map(|_| vector(&mut rng)).collect();
    let class_vectors: Vec<Vec<f64>> = (0..k).map(|_| vector(&mut rng)).collect();
    // Pairwise-distinct rows: identical rows pin a PBT hinge at exactly zero.
    let mut rows: Vec<Vec<bool>> = Vec::with_capacity(k);
    while rows.len() < k {
        let mut row: Vec<bool> = (0..a).map(|_| rng.random_bool(0.5)).collect();
        let forced = rng.random_range(0..a);
        row[forced] = true;
        if !rows.contains(&row) {
            rows.push(row);
        }
    }
    let margins = MarginMatrix::from_fn(k, |i, j| hamming_margin(&rows[i], &rows[j]).expect("equal lengths"));
    let images = (0..2 * k)
        .map(|i| ImageSample {
            weights: (0..a).map(|_| rng.random_range(0.05..1.0)).collect(),
            class: i % k,
        })
        .collect();
    let set = TrainingSet {
        attr_vectors,
        class_names: (0..k).map(|i| format!("class{i}")).collect(),
        class_vectors,
        margins,
        rows: Some(rows),
        images,
        lambda: 0.0,
    };

    for _ in 0..1000 {
        let mut params = init_network(d0, h1, d, rng.random())?;
        for b in params.b1.iter_mut().chain(params.b2.iter_mut()) {
            *b = rng.random_range(-0.5..0.5);
        }
        let eval = objective.evaluate(&params, &set, None)?;
        if eval.hinges.iter().all(|h| h.abs() > KINK_CLEARANCE) {
            return Ok(GradCheckInstance { params, set });
        }
    }
    Err(Error::BadConfig(format!(
        "seed {seed}: could not draw a kink-free instance"
    )))
}

/// `L(θ+h) − L(θ−h)` accumulated term by term. Differencing each hinge
/// before summing keeps the round-off at the scale of single terms rather
/// than of the whole loss.
fn loss_difference(plus: &[f64], minus: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for (p, m) in plus.iter().zip(minus) {
        let x = p.max(0.0) - m.max(0.0);
        let t = sum + x;
        comp += if sum.abs() >= x.abs() {
            (sum - t) + x
        } else {
            (x - t) + sum
        };
        sum = t;
    }
    sum + comp
}

/// Analytic vs central-difference gradient over every parameter of `instance`.
pub fn check_instance(objective: &dyn Objective, instance: &GradCheckInstance) -> Result<f64> {
    let GradCheckInstance { params, set } = instance;
    let analytic = objective.evaluate(params, set, None)?.grads;
    let mut numeric = Vec::with_capacity(params.num_params());
    let mut probe = params.clone();
    for i in 0..params.num_params() {
        let orig = *probe.param_mut(i);
        *probe.param_mut(i) = orig + FD_STEP;
        let plus = objective.evaluate(&probe, set, None)?.hinges;
        *probe.param_mut(i) = orig - FD_STEP;
        let minus = objective.evaluate(&probe, set, None)?.hinges;
        *probe.param_mut(i) = orig;
        let decay = set.lambda * ((orig + FD_STEP).powi(2) - (orig - FD_STEP).powi(2));
        numeric.push((loss_difference(&plus, &minus) + decay) / (2.0 * FD_STEP));
    }
    let analytic: Vec<f64> = analytic.iter().copied().collect();
    Ok(max_relative_error(&analytic, &numeric))
}

/// Builds the seeded instance for `mode` and returns the maximum relative gradient error.
pub fn finite_diff_check(seed: u64, mode: &str) -> Result<f64> {
    let registry = ObjectiveRegistry::with_builtins();
    let objective = registry.get(mode)?;
    let instance = random_instance(seed, objective)?;
    check_instance(objective, &instance)
}
