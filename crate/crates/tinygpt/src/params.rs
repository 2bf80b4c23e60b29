//! Flat parameter storage with named tensor views.
//!
//! All weights live in one contiguous buffer in the order listed by
//! [`Layout::tensors`]; gradients and optimizer moments reuse the same
//! layout. The same order is used on disk.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::ModelConfig;
use crate::scalar::Scalar;

/// Role of a tensor; decides initialization and weight decay.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorKind {
    Embedding,
    NormScale,
    Matrix,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub kind: TensorKind,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Offsets of one transformer block's tensors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockOffsets {
    pub ln1: usize,
    /// `[d, 3d]`: query, key and value projections side by side.
    pub wqkv: usize,
    /// `[d, d]`
    pub wo: usize,
    pub ln2: usize,
    /// `[d, 4d]`
    pub w_up: usize,
    /// `[4d, d]`
    pub w_down: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub cfg: ModelConfig,
    /// `[vocab, d]`, doubles as the output head.
    pub wte: usize,
    /// `[block, d]`
    pub wpe: usize,
    pub blocks: Vec<BlockOffsets>,
    pub ln_f: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(cfg: ModelConfig) -> Self {
        let d = cfg.embed_dim;
        let mut cursor = 0;
        let mut take = |n: usize| {
            let at = cursor;
            cursor += n;
            at
        };
        let wte = take(cfg.vocab_size * d);
        let wpe = take(cfg.block_size * d);
        let blocks = (0..cfg.n_layers)
            .map(|_| BlockOffsets {
                ln1: take(d),
                wqkv: take(3 * d * d),
                wo: take(d * d),
                ln2: take(d),
                w_up: take(4 * d * d),
                w_down: take(4 * d * d),
            })
            .collect();
        let ln_f = take(d);
        Layout { cfg, wte, wpe, blocks, ln_f, total: cursor }
    }

    /// Every tensor in storage order.
    pub fn tensors(&self) -> Vec<TensorSpec> {
        let d = self.cfg.embed_dim;
        let spec = |name: String, offset, rows, cols, kind| TensorSpec { name, offset, rows, cols, kind };
        let mut out = vec![
            spec("wte".into(), self.wte, self.cfg.vocab_size, d, TensorKind::Embedding),
            spec("wpe".into(), self.wpe, self.cfg.block_size, d, TensorKind::Embedding),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            out.push(spec(format!("h{i}.ln1"), b.ln1, 1, d, TensorKind::NormScale));
            out.push(spec(format!("h{i}.wqkv"), b.wqkv, d, 3 * d, TensorKind::Matrix));
            out.push(spec(format!("h{i}.wo"), b.wo, d, d, TensorKind::Matrix));
            out.push(spec(format!("h{i}.ln2"), b.ln2, 1, d, TensorKind::NormScale));
            out.push(spec(format!("h{i}.w_up"), b.w_up, d, 4 * d, TensorKind::Matrix));
            out.push(spec(format!("h{i}.w_down"), b.w_down, 4 * d, d, TensorKind::Matrix));
        }
        out.push(spec("ln_f".into(), self.ln_f, 1, d, TensorKind::NormScale));
        out
    }

    /// Per-element flag: true where decoupled weight decay applies.
    pub fn decay_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.total];
        for t in self.tensors() {
            if t.kind == TensorKind::Matrix {
                mask[t.range()].iter_mut().for_each(|m| *m = true);
            }
        }
        mask
    }
}

/// Model weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<F> {
    pub layout: Layout,
    pub data: Vec<F>,
}

impl<F: Scalar> ModelParams<F> {
    pub fn zeros(cfg: ModelConfig) -> Self {
        let layout = Layout::new(cfg);
        let data = vec![F::zero(); layout.total];
        ModelParams { layout, data }
    }

    /// Gaussian initialization: std 0.02 for embeddings and projections,
    /// 0.02/sqrt(2 * n_layers) for the residual output projections (`wo`,
    /// `w_down`), ones for norm scales.
    pub fn init(cfg: ModelConfig, seed: u64) -> Self {
        let mut p = Self::zeros(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let residual_std = 0.02 / (2.0 * cfg.n_layers as f64).sqrt();
        for t in p.layout.tensors() {
            let std = if t.name.ends_with(".wo") || t.name.ends_with(".w_down") { residual_std } else { 0.02 };
            for x in &mut p.data[t.range()] {
                *x = match t.kind {
                    TensorKind::NormScale => F::one(),
                    _ => {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        F::lit(std * z)
                    }
                };
            }
        }
        p
    }

    pub fn cfg(&self) -> ModelConfig {
        self.layout.cfg
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn tensor(&self, offset: usize, len: usize) -> &[F] {
        &self.data[offset..offset + len]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Same weights in another precision.
    pub fn cast<G: Scalar>(&self) -> ModelParams<G> {
        ModelParams {
            layout: self.layout.clone(),
            data: self.data.iter().map(|&x| G::from_f64(x.f64()).unwrap_or_else(G::nan)).collect(),
        }
    }
}
