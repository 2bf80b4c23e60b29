//! AdamW with decoupled weight decay and global-norm gradient clipping.

use thiserror::Error;

use crate::params::{Layout, ModelParams};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig { beta1: 0.9, beta2: 0.95, eps: 1e-8, weight_decay: 0.1 }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("non-finite gradient {value} in tensor {tensor} at element {index} (step {step})")]
    NonFiniteGradient { tensor: String, index: usize, value: f64, step: u64 },
    #[error("gradient has {got} elements, parameters have {expected}")]
    ShapeMismatch { got: usize, expected: usize },
}

/// Optimizer state. Moments mirror the parameter layout.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW<F> {
    pub config: AdamWConfig,
    pub m: Vec<F>,
    pub v: Vec<F>,
    pub step: u64,
    decay: Vec<bool>,
}

impl<F: Scalar> AdamW<F> {
    pub fn new(layout: &Layout, config: AdamWConfig) -> Self {
        AdamW { config, m: vec![F::zero(); layout.total], v: vec![F::zero(); layout.total], step: 0, decay: layout.decay_mask() }
    }

    /// Rebuilds state from stored moments (checkpoint restore).
    pub fn from_parts(layout: &Layout, config: AdamWConfig, m: Vec<F>, v: Vec<F>, step: u64) -> Self {
        assert_eq!(m.len(), layout.total);
        assert_eq!(v.len(), layout.total);
        AdamW { config, m, v, step, decay: layout.decay_mask() }
    }

    /// One update. Norm scales and embeddings are never decayed.
    pub fn step(&mut self, params: &mut ModelParams<F>, grads: &[F], lr: f64) -> Result<(), OptimError> {
        if grads.len() != params.len() {
            return Err(OptimError::ShapeMismatch { got: grads.len(), expected: params.len() });
        }
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            let tensor = params
                .layout
                .tensors()
                .into_iter()
                .find(|t| t.range().contains(&index))
                .map(|t| t.name)
                .unwrap_or_default();
            return Err(OptimError::NonFiniteGradient { tensor, index, value: grads[index].f64(), step: self.step });
        }
        self.step += 1;
        let AdamWConfig { beta1, beta2, eps, weight_decay } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let shrink = 1.0 - lr * weight_decay;
        for i in 0..grads.len() {
            let g = grads[i].f64();
            let m = beta1 * self.m[i].f64() + (1.0 - beta1) * g;
            let v = beta2 * self.v[i].f64() + (1.0 - beta2) * g * g;
            self.m[i] = F::lit(m);
            self.v[i] = F::lit(v);
            let mut p = params.data[i].f64();
            if self.decay[i] {
                p *= shrink;
            }
            p -= lr * (m / bc1) / ((v / bc2).sqrt() + eps);
            params.data[i] = F::lit(p);
        }
        Ok(())
    }
}

/// Global L2 norm of `grads` (64-bit accumulation). When it exceeds
/// `max_norm` every element is scaled by `max_norm / (norm + 1e-6)`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<F: Scalar>(grads: &mut [F], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.f64() * g.f64()).sum::<f64>().sqrt();
    let coef = max_norm / (norm + 1e-6);
    if coef < 1.0 {
        let c = F::lit(coef);
        grads.iter_mut().for_each(|g| *g *= c);
    }
    norm
}
