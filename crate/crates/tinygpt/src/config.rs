use thiserror::Error;

use crate::vocab::VOCAB_SIZE;

/// Architecture hyperparameters of the decoder-only transformer.
///
/// Linear layers carry no bias and there is no dropout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub embed_dim: usize,
    pub block_size: usize,
    pub vocab_size: usize,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("embed_dim {embed_dim} is not divisible by n_heads {n_heads}")]
    HeadSplit { embed_dim: usize, n_heads: usize },
    #[error("{0} must be positive")]
    Zero(&'static str),
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl ModelConfig {
    /// Six layers, six heads, width 120, context 256, 41 tokens: about 1.07M
    /// parameters.
    pub const fn paper() -> Self {
        ModelConfig { n_layers: 6, n_heads: 6, embed_dim: 120, block_size: 256, vocab_size: VOCAB_SIZE }
    }

    /// Small trainable model over the full alphabet, used for the
    /// per-concept-level experiments and fast end-to-end tests.
    pub const fn tiny() -> Self {
        ModelConfig { n_layers: 2, n_heads: 2, embed_dim: 32, block_size: 128, vocab_size: VOCAB_SIZE }
    }

    /// Configuration used for finite-difference gradient checks.
    pub const fn gradcheck() -> Self {
        ModelConfig { n_layers: 2, n_heads: 2, embed_dim: 16, block_size: 16, vocab_size: 8 }
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.n_heads
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("embed_dim", self.embed_dim),
            ("block_size", self.block_size),
            ("vocab_size", self.vocab_size),
        ] {
            if v == 0 {
                return Err(ConfigError::Zero(name));
            }
        }
        if self.embed_dim % self.n_heads != 0 {
            return Err(ConfigError::HeadSplit { embed_dim: self.embed_dim, n_heads: self.n_heads });
        }
        Ok(())
    }

    /// Closed-form parameter count (output head tied to the token embedding).
    pub fn param_count(&self) -> usize {
        let d = self.embed_dim;
        let per_layer = d + 3 * d * d + d * d + d + 4 * d * d + 4 * d * d;
        self.vocab_size * d + self.block_size * d + self.n_layers * per_layer + d
    }
}
