//! The shared two-layer transformation `T(v) = sigmoid(W2 · tanh(W1 · v + b1) + b2)`
//! with closed-form reverse-mode gradients.

mod adam;
mod model_file;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use model_file::{deserialize_model, serialize_model, ModelMeta, MODEL_MAGIC, MODEL_VERSION};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Weights and biases of the transformation network. Matrices are row-major:
/// `w1` is `h1 × d0`, `w2` is `d × h1`.
///
/// The same shape doubles as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    d0: usize,
    h1: usize,
    d: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub input: Vec<f64>,
    pub hidden_pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub output_pre: Vec<f64>,
    pub output: Vec<f64>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl NetworkParams {
    pub fn zeros(d0: usize, h1: usize, d: usize) -> Result<Self> {
        if d0 == 0 || h1 == 0 || d == 0 {
            return Err(Error::BadDim);
        }
        Ok(Self {
            d0,
            h1,
            d,
            w1: vec![0.0; h1 * d0],
            b1: vec![0.0; h1],
            w2: vec![0.0; d * h1],
            b2: vec![0.0; d],
        })
    }

    /// Builds parameters from explicit blocks, checking every length.
    pub fn from_blocks(
        (d0, h1, d): (usize, usize, usize),
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: Vec<f64>,
    ) -> Result<Self> {
        let mut p = Self::zeros(d0, h1, d)?;
        if w1.len() != p.w1.len() || b1.len() != h1 || w2.len() != p.w2.len() || b2.len() != d {
            return Err(Error::ShapeMismatch);
        }
        p.w1 = w1;
        p.b1 = b1;
        p.w2 = w2;
        p.b2 = b2;
        if p.blocks().iter().flat_map(|b| b.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(p)
    }

    pub fn input_dim(&self) -> usize {
        self.d0
    }

    pub fn hidden_dim(&self) -> usize {
        self.h1
    }

    pub fn output_dim(&self) -> usize {
        self.d
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.d0, self.h1, self.d)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.d0, self.h1, self.d).expect("dims already validated")
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.dims() == other.dims()
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// `[w1, b1, w2, b2]`
    pub fn blocks(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    /// All parameters in block order `w1, b1, w2, b2`.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.blocks().into_iter().flat_map(|b| b.iter())
    }

    /// Mutable access to the `i`-th parameter in [`NetworkParams::iter`] order.
    pub fn param_mut(&mut self, mut i: usize) -> &mut f64 {
        for block in self.blocks_mut() {
            if i < block.len() {
                return &mut block[i];
            }
            i -= block.len();
        }
        panic!("parameter index out of range");
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += scale * b;
            }
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.iter().map(|x| x * x).sum()
    }

    /// Forward pass returning only the output.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.forward(v).map(|c| c.output)
    }

    pub fn forward(&self, v: &[f64]) -> Result<ForwardCache> {
        if v.len() != self.d0 {
            return Err(Error::DimMismatch {
                expected: self.d0,
                found: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let hidden_pre: Vec<f64> = (0..self.h1)
            .map(|r| {
                let row = &self.w1[r * self.d0..(r + 1) * self.d0];
                self.b1[r] + row.iter().zip(v).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect();
        let hidden: Vec<f64> = hidden_pre.iter().map(|z| z.tanh()).collect();
        let output_pre: Vec<f64> = (0..self.d)
            .map(|r| {
                let row = &self.w2[r * self.h1..(r + 1) * self.h1];
                self.b2[r] + row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>()
            })
            .collect();
        let output = output_pre.iter().map(|&z| sigmoid(z)).collect();
        Ok(ForwardCache {
            input: v.to_vec(),
            hidden_pre,
            hidden,
            output_pre,
            output,
        })
    }

    /// Gradients of `upstream · output` with respect to the parameters and the input.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<(NetworkParams, Vec<f64>)> {
        let mut grads = self.zeros_like();
        let grad_input = self.accumulate_backward(cache, upstream, &mut grads)?;
        Ok((grads, grad_input))
    }

    /// Adds the parameter gradient of `upstream · output` into `grads` and
    /// returns the input gradient.
    pub fn accumulate_backward(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        grads: &mut NetworkParams,
    ) -> Result<Vec<f64>> {
        if upstream.len() != self.d {
            return Err(Error::DimMismatch {
                expected: self.d,
                found: upstream.len(),
            });
        }
        if cache.input.len() != self.d0 || cache.hidden.len() != self.h1 || cache.output.len() != self.d {
            return Err(Error::DimMismatch {
                expected: self.d0,
                found: cache.input.len(),
            });
        }
        if !grads.same_shape(self) {
            return Err(Error::ShapeMismatch);
        }
        let (d0, h1) = (self.d0, self.h1);

        let dz2: Vec<f64> = upstream
            .iter()
            .zip(&cache.output)
            .map(|(u, s)| u * s * (1.0 - s))
            .collect();
        let mut dh = vec![0.0; h1];
        for (r, &g) in dz2.iter().enumerate() {
            grads.b2[r] += g;
            let w_row = &self.w2[r * h1..(r + 1) * h1];
            let g_row = &mut grads.w2[r * h1..(r + 1) * h1];
            for c in 0..h1 {
                g_row[c] += g * cache.hidden[c];
                dh[c] += w_row[c] * g;
            }
        }

        let mut grad_input = vec![0.0; d0];
        for (r, (&h, &d)) in cache.hidden.iter().zip(&dh).enumerate() {
            let g = d * (1.0 - h * h);
            grads.b1[r] += g;
            let w_row = &self.w1[r * d0..(r + 1) * d0];
            let g_row = &mut grads.w1[r * d0..(r + 1) * d0];
            for c in 0..d0 {
                g_row[c] += g * cache.input[c];
                grad_input[c] += w_row[c] * g;
            }
        }
        Ok(grad_input)
    }
}

/// Fan-scaled uniform weights on ±√(6/(fan_in+fan_out)), zero biases.
pub fn init_network(d0: usize, h1: usize, d: usize, seed: u64) -> Result<NetworkParams> {
    let mut p = NetworkParams::zeros(d0, h1, d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound1 = (6.0 / (d0 + h1) as f64).sqrt();
    let bound2 = (6.0 / (h1 + d) as f64).sqrt();
    p.w1.iter_mut().for_each(|w| *w = rng.random_range(-bound1..=bound1));
    p.w2.iter_mut().for_each(|w| *w = rng.random_range(-bound2..=bound2));
    Ok(p)
}
