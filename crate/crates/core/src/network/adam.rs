use crate::error::{Error, Result};

use super::NetworkParams;

/// Adam hyperparameters. Defaults: lr 1e-4 with the canonical moment constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state: step count plus first and second moments shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: NetworkParams,
    pub v: NetworkParams,
}

impl AdamState {
    pub fn new(params: &NetworkParams, config: AdamConfig) -> Result<Self> {
        let ok = config.lr > 0.0
            && config.eps > 0.0
            && (0.0..1.0).contains(&config.beta1)
            && config.beta1 > 0.0
            && (0.0..1.0).contains(&config.beta2)
            && config.beta2 > 0.0;
        if !ok {
            return Err(Error::BadConfig(format!("invalid Adam settings {config:?}")));
        }
        Ok(Self {
            config,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        })
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut NetworkParams, grads: &NetworkParams) -> Result<()> {
        if !params.same_shape(grads) || !params.same_shape(&self.m) {
            return Err(Error::ShapeMismatch);
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);

        let blocks = params
            .blocks_mut()
            .into_iter()
            .zip(grads.blocks())
            .zip(self.m.blocks_mut().into_iter().zip(self.v.blocks_mut()));
        for ((p, g), (m, v)) in blocks {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Functional form: returns updated copies of the parameters and state.
pub fn adam_step(
    params: &NetworkParams,
    state: &AdamState,
    grads: &NetworkParams,
) -> Result<(NetworkParams, AdamState)> {
    let mut p = params.clone();
    let mut s = state.clone();
    s.step(&mut p, grads)?;
    Ok((p, s))
}
