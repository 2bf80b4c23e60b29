//! Forward pass and exact reverse-mode gradients of the transformer.
//!
//! Pre-norm residual blocks: `x += attn(ln1(x)); x += mlp(ln2(x))`, then a
//! final norm and a head tied to the token embedding. Norms are scale-only,
//! linear layers have no bias, the MLP uses the tanh GELU.

use rayon::prelude::*;
use thiserror::Error;

use crate::params::{Layout, ModelParams};
use crate::scalar::{gemm, Scalar, Strided};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("token window is empty")]
    EmptyWindow,
    #[error("window of {len} tokens exceeds block size {block_size}")]
    WindowTooLong { len: usize, block_size: usize },
    #[error("token id {id} outside vocabulary of {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("batch row {row} has {len} tokens, expected {expected}")]
    RaggedBatch { row: usize, len: usize, expected: usize },
}

#[derive(Default)]
pub(crate) struct NormCache<F> {
    pub(crate) out: Vec<F>,
    xhat: Vec<F>,
    rstd: Vec<F>,
}

#[derive(Default)]
struct LayerCache<F> {
    ln1: NormCache<F>,
    qkv: Vec<F>,
    att: Vec<F>,
    y: Vec<F>,
    ln2: NormCache<F>,
    h_pre: Vec<F>,
    h_act: Vec<F>,
}

/// Reusable activation and scratch buffers.
///
/// Keeping one workspace alive across training steps avoids re-faulting
/// gigabytes of fresh pages per step at the default configuration.
#[derive(Default)]
pub struct Workspace<F> {
    batch: usize,
    seq: usize,
    tokens: Vec<u32>,
    layers: Vec<LayerCache<F>>,
    ln_f: NormCache<F>,
    x: Vec<F>,
    tmp: Vec<F>,
    logits: Vec<F>,
    // backward scratch
    dx: Vec<F>,
    d_narrow: Vec<F>,
    d_wide: Vec<F>,
    d_qkv: Vec<F>,
}

impl<F: Scalar> Workspace<F> {
    pub fn new() -> Self {
        Workspace {
            batch: 0,
            seq: 0,
            tokens: Vec::new(),
            layers: Vec::new(),
            ln_f: NormCache::default(),
            x: Vec::new(),
            tmp: Vec::new(),
            logits: Vec::new(),
            dx: Vec::new(),
            d_narrow: Vec::new(),
            d_wide: Vec::new(),
            d_qkv: Vec::new(),
        }
    }

    /// `[batch * seq, vocab]` logits of the last forward pass.
    pub fn logits(&self) -> &[F] {
        &self.logits
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.batch, self.seq)
    }
}

/// Resizes without touching existing contents when the length is unchanged.
fn fit<F: Scalar>(v: &mut Vec<F>, len: usize) {
    if v.len() != len {
        v.clear();
        v.resize(len, F::zero());
    }
}

fn zeroed<F: Scalar>(v: &mut Vec<F>, len: usize) {
    fit(v, len);
    v.iter_mut().for_each(|x| *x = F::zero());
}

pub(crate) fn check_tokens(tokens: &[u32], vocab_size: usize) -> Result<(), ModelError> {
    match tokens.iter().find(|&&id| id as usize >= vocab_size) {
        Some(&id) => Err(ModelError::TokenOutOfRange { id, vocab_size }),
        None => Ok(()),
    }
}

pub(crate) fn layer_norm<F: Scalar>(x: &[F], w: &[F], d: usize, cache: &mut NormCache<F>) {
    let rows = x.len() / d;
    fit(&mut cache.out, x.len());
    fit(&mut cache.xhat, x.len());
    fit(&mut cache.rstd, rows);
    let NormCache { out, xhat, rstd } = cache;
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().map(|v| v.f64()).sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v.f64() - mean).powi(2)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = F::lit(rs);
        for i in 0..d {
            let h = F::lit((row[i].f64() - mean) * rs);
            xhat[r * d + i] = h;
            out[r * d + i] = h * w[i];
        }
    }
}

/// Accumulates `dx += d(norm)/dx * dout` and returns the scale gradient.
fn layer_norm_backward<F: Scalar>(dout: &[F], cache: &NormCache<F>, w: &[F], d: usize, dx: &mut [F]) -> Vec<f64> {
    let rows = dout.len() / d;
    let mut dw = vec![0.0f64; d];
    let mut dxhat = vec![0.0f64; d];
    for r in 0..rows {
        let go = &dout[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for i in 0..d {
            let g = go[i].f64();
            let h = xh[i].f64();
            dw[i] += g * h;
            dxhat[i] = g * w[i].f64();
            m1 += dxhat[i];
            m2 += dxhat[i] * h;
        }
        m1 /= d as f64;
        m2 /= d as f64;
        let rs = cache.rstd[r].f64();
        for i in 0..d {
            let g = rs * (dxhat[i] - m1 - xh[i].f64() * m2);
            dx[r * d + i] += F::lit(g);
        }
    }
    dw
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// `out = gelu(x)` elementwise.
pub(crate) fn gelu_slice<F: Scalar>(x: &[F], out: &mut [F]) {
    let (c, a, half, one) = (F::lit(GELU_C), F::lit(GELU_A), F::lit(0.5), F::one());
    for (o, &v) in out.iter_mut().zip(x) {
        *o = half * v * (one + (c * (v + a * v * v * v)).tanh_fast());
    }
}

/// `grad *= gelu'(x)` elementwise.
fn gelu_backward_slice<F: Scalar>(x: &[F], grad: &mut [F]) {
    let (c, a, half, one, three) = (F::lit(GELU_C), F::lit(GELU_A), F::lit(0.5), F::one(), F::lit(3.0));
    for (g, &v) in grad.iter_mut().zip(x) {
        let t = (c * (v + a * v * v * v)).tanh_fast();
        *g *= half * (one + t) + half * v * (one - t * t) * c * (one + three * a * v * v);
    }
}

/// Numerically stable softmax over `row` with a 64-bit normalizer.
pub(crate) fn softmax_in_place<F: Scalar>(row: &mut [F]) {
    let max = row.iter().fold(F::neg_infinity(), |m, &v| if v > m { v } else { m });
    for v in row.iter_mut() {
        *v = (*v - max).exp_fast();
    }
    let sum: f64 = row.iter().map(|v| v.f64()).sum();
    let inv = F::lit(1.0 / sum);
    for v in row.iter_mut() {
        *v *= inv;
    }
}

/// Causal attention for one sequence: fills `att` (`[heads, T, T]`
/// probabilities) and `y` (`[T, d]`, heads concatenated).
fn attention_seq<F: Scalar>(qkv: &[F], att: &mut [F], y: &mut [F], t: usize, d: usize, heads: usize) {
    let hd = d / heads;
    let scale = F::lit(1.0 / (hd as f64).sqrt());
    let qv = Strided::rm_stride(t, hd, 3 * d);
    for h in 0..heads {
        let p = &mut att[h * t * t..(h + 1) * t * t];
        gemm(scale, &qkv[h * hd..], qv, &qkv[d + h * hd..], qv.t(), F::zero(), p, Strided::rm(t, t));
        for i in 0..t {
            let row = &mut p[i * t..(i + 1) * t];
            softmax_in_place(&mut row[..=i]);
            for v in row[i + 1..].iter_mut() {
                *v = F::zero();
            }
        }
        gemm(F::one(), p, Strided::rm(t, t), &qkv[2 * d + h * hd..], qv, F::zero(), &mut y[h * hd..], Strided::rm_stride(t, hd, d));
    }
}

#[allow(clippy::too_many_arguments)]
fn attention_seq_backward<F: Scalar>(
    qkv: &[F],
    att: &[F],
    dy: &[F],
    dqkv: &mut [F],
    t: usize,
    d: usize,
    heads: usize,
) {
    let hd = d / heads;
    let scale = F::lit(1.0 / (hd as f64).sqrt());
    let qv = Strided::rm_stride(t, hd, 3 * d);
    let yv = Strided::rm_stride(t, hd, d);
    let mut ds = vec![F::zero(); t * t];
    for h in 0..heads {
        let p = &att[h * t * t..(h + 1) * t * t];
        // dP = dY V^T
        gemm(F::one(), &dy[h * hd..], yv, &qkv[2 * d + h * hd..], qv.t(), F::zero(), &mut ds, Strided::rm(t, t));
        // dV = P^T dY
        gemm(F::one(), p, Strided::rm(t, t).t(), &dy[h * hd..], yv, F::zero(), &mut dqkv[2 * d + h * hd..], qv);
        for i in 0..t {
            let pr = &p[i * t..(i + 1) * t];
            let dr = &mut ds[i * t..(i + 1) * t];
            let dot = F::lit((0..=i).map(|j| (pr[j] * dr[j]).f64()).sum::<f64>());
            for j in 0..=i {
                dr[j] = pr[j] * (dr[j] - dot);
            }
            for v in dr[i + 1..].iter_mut() {
                *v = F::zero();
            }
        }
        // dQ = scale dS K, dK = scale dS^T Q
        gemm(scale, &ds, Strided::rm(t, t), &qkv[d + h * hd..], qv, F::zero(), &mut dqkv[h * hd..], qv);
        gemm(scale, &ds, Strided::rm(t, t).t(), &qkv[h * hd..], qv, F::zero(), &mut dqkv[d + h * hd..], qv);
    }
}

/// `out[n, :] = x[n, :] * W` for a `[rows, cols]` weight stored row-major.
fn linear<F: Scalar>(x: &[F], w: &[F], out: &mut Vec<F>, n: usize, rows: usize, cols: usize) {
    fit(out, n * cols);
    gemm(F::one(), x, Strided::rm(n, rows), w, Strided::rm(rows, cols), F::zero(), out, Strided::rm(n, cols));
}

/// Backward of [`linear`]: `dW += x^T dout` and `dx = dout W^T`.
#[allow(clippy::too_many_arguments)]
fn linear_backward<F: Scalar>(
    x: &[F],
    w: &[F],
    dout: &[F],
    dw: &mut [F],
    dx: &mut Vec<F>,
    n: usize,
    rows: usize,
    cols: usize,
) {
    gemm(F::one(), x, Strided::rm(n, rows).t(), dout, Strided::rm(n, cols), F::one(), dw, Strided::rm(rows, cols));
    fit(dx, n * rows);
    gemm(F::one(), dout, Strided::rm(n, cols), w, Strided::rm(rows, cols).t(), F::zero(), dx, Strided::rm(n, rows));
}

/// Runs the model on `batch` sequences of `seq` tokens each (row-major in
/// `tokens`) and keeps everything the backward pass needs in `ws`.
pub fn forward_into<F: Scalar>(
    params: &ModelParams<F>,
    tokens: &[u32],
    batch: usize,
    seq: usize,
    ws: &mut Workspace<F>,
) -> Result<(), ModelError> {
    let cfg = params.cfg();
    if seq == 0 || batch == 0 {
        return Err(ModelError::EmptyWindow);
    }
    if seq > cfg.block_size {
        return Err(ModelError::WindowTooLong { len: seq, block_size: cfg.block_size });
    }
    assert_eq!(tokens.len(), batch * seq, "token buffer does not match batch shape");
    check_tokens(tokens, cfg.vocab_size)?;
    let d = cfg.embed_dim;
    let n = batch * seq;
    let heads = cfg.n_heads;
    let lay: &Layout = &params.layout;
    let w = &params.data;

    ws.batch = batch;
    ws.seq = seq;
    ws.tokens.clear();
    ws.tokens.extend_from_slice(tokens);
    ws.layers.resize_with(cfg.n_layers, LayerCache::default);
    let Workspace { layers, ln_f, x, tmp, logits, .. } = ws;

    fit(x, n * d);
    for (row, &tok) in tokens.iter().enumerate() {
        let pos = row % seq;
        let te = &w[lay.wte + tok as usize * d..][..d];
        let pe = &w[lay.wpe + pos * d..][..d];
        for i in 0..d {
            x[row * d + i] = te[i] + pe[i];
        }
    }

    for (b, c) in lay.blocks.iter().zip(layers.iter_mut()) {
        layer_norm(x, &w[b.ln1..b.ln1 + d], d, &mut c.ln1);
        linear(&c.ln1.out, &w[b.wqkv..], &mut c.qkv, n, d, 3 * d);
        fit(&mut c.att, batch * heads * seq * seq);
        fit(&mut c.y, n * d);
        c.att
            .par_chunks_mut(heads * seq * seq)
            .zip(c.y.par_chunks_mut(seq * d))
            .zip(c.qkv.par_chunks(seq * 3 * d))
            .for_each(|((a, yy), q)| attention_seq(q, a, yy, seq, d, heads));
        linear(&c.y, &w[b.wo..], tmp, n, d, d);
        x.iter_mut().zip(tmp.iter()).for_each(|(a, &p)| *a += p);

        layer_norm(x, &w[b.ln2..b.ln2 + d], d, &mut c.ln2);
        linear(&c.ln2.out, &w[b.w_up..], &mut c.h_pre, n, d, 4 * d);
        fit(&mut c.h_act, n * 4 * d);
        gelu_slice(&c.h_pre, &mut c.h_act);
        linear(&c.h_act, &w[b.w_down..], tmp, n, 4 * d, d);
        x.iter_mut().zip(tmp.iter()).for_each(|(a, &p)| *a += p);
    }

    layer_norm(x, &w[lay.ln_f..lay.ln_f + d], d, ln_f);
    let v = cfg.vocab_size;
    fit(logits, n * v);
    gemm(F::one(), &ln_f.out, Strided::rm(n, d), &w[lay.wte..], Strided::rm(v, d).t(), F::zero(), logits, Strided::rm(n, v));
    Ok(())
}

/// Logits `[window.len(), vocab]` (row-major) for a single token window.
pub fn forward<F: Scalar>(params: &ModelParams<F>, window: &[u32]) -> Result<Vec<F>, ModelError> {
    let mut ws = Workspace::new();
    forward_into(params, window, 1, window.len(), &mut ws)?;
    Ok(ws.logits)
}

/// Writes into `grads` (parameter layout) the gradient of a scalar loss
/// whose derivative with respect to the logits of the last
/// [`forward_into`] call is `dlogits`.
pub fn backward_into<F: Scalar>(params: &ModelParams<F>, ws: &mut Workspace<F>, dlogits: &[F], grads: &mut Vec<F>) {
    let cfg = params.cfg();
    let d = cfg.embed_dim;
    let v = cfg.vocab_size;
    let heads = cfg.n_heads;
    let (batch, seq) = (ws.batch, ws.seq);
    let n = batch * seq;
    let lay = &params.layout;
    let w = &params.data;
    zeroed(grads, lay.total);
    let g = grads;
    let Workspace { layers, ln_f, tokens, dx, d_narrow, d_wide, d_qkv, .. } = ws;

    // head (tied to wte)
    gemm(F::one(), dlogits, Strided::rm(n, v).t(), &ln_f.out, Strided::rm(n, d), F::one(), &mut g[lay.wte..], Strided::rm(v, d));
    fit(d_narrow, n * d);
    gemm(F::one(), dlogits, Strided::rm(n, v), &w[lay.wte..], Strided::rm(v, d), F::zero(), d_narrow, Strided::rm(n, d));
    zeroed(dx, n * d);
    let dw = layer_norm_backward(d_narrow, ln_f, &w[lay.ln_f..lay.ln_f + d], d, dx);
    store(&mut g[lay.ln_f..lay.ln_f + d], &dw);

    for (b, cache) in lay.blocks.iter().zip(layers.iter()).rev() {
        // MLP branch
        linear_backward(&cache.h_act, &w[b.w_down..], dx, &mut g[b.w_down..b.w_down + 4 * d * d], d_wide, n, 4 * d, d);
        gelu_backward_slice(&cache.h_pre, d_wide);
        linear_backward(&cache.ln2.out, &w[b.w_up..], d_wide, &mut g[b.w_up..b.w_up + 4 * d * d], d_narrow, n, d, 4 * d);
        let dw = layer_norm_backward(d_narrow, &cache.ln2, &w[b.ln2..b.ln2 + d], d, dx);
        store(&mut g[b.ln2..b.ln2 + d], &dw);

        // attention branch
        linear_backward(&cache.y, &w[b.wo..], dx, &mut g[b.wo..b.wo + d * d], d_narrow, n, d, d);
        fit(d_qkv, n * 3 * d);
        d_qkv
            .par_chunks_mut(seq * 3 * d)
            .zip(d_narrow.par_chunks(seq * d))
            .zip(cache.qkv.par_chunks(seq * 3 * d).zip(cache.att.par_chunks(heads * seq * seq)))
            .for_each(|((dq, dyy), (q, a))| attention_seq_backward(q, a, dyy, dq, seq, d, heads));
        linear_backward(&cache.ln1.out, &w[b.wqkv..], d_qkv, &mut g[b.wqkv..b.wqkv + 3 * d * d], d_narrow, n, d, 3 * d);
        let dw = layer_norm_backward(d_narrow, &cache.ln1, &w[b.ln1..b.ln1 + d], d, dx);
        store(&mut g[b.ln1..b.ln1 + d], &dw);
    }

    // embeddings
    let mut dwte = vec![0.0f64; v * d];
    let mut dwpe = vec![0.0f64; cfg.block_size * d];
    for (row, &tok) in tokens.iter().enumerate() {
        let pos = row % seq;
        for i in 0..d {
            let gv = dx[row * d + i].f64();
            dwte[tok as usize * d + i] += gv;
            dwpe[pos * d + i] += gv;
        }
    }
    for (gw, add) in g[lay.wte..lay.wte + v * d].iter_mut().zip(&dwte) {
        *gw = F::lit(gw.f64() + add);
    }
    store(&mut g[lay.wpe..lay.wpe + cfg.block_size * d], &dwpe);
}

fn store<F: Scalar>(dst: &mut [F], src: &[f64]) {
    for (a, &b) in dst.iter_mut().zip(src) {
        *a = F::lit(b);
    }
}

/// Mean next-token cross-entropy and its gradient with respect to the
/// logits. Targets are aligned with logit rows.
pub fn cross_entropy<F: Scalar>(logits: &[F], targets: &[u32], vocab: usize) -> (f64, Vec<F>) {
    let n = targets.len();
    let mut dlogits = vec![F::zero(); logits.len()];
    let mut total = 0.0f64;
    for (r, &tgt) in targets.iter().enumerate() {
        let row = &logits[r * vocab..(r + 1) * vocab];
        let max = row.iter().fold(f64::NEG_INFINITY, |m, x| m.max(x.f64()));
        let sum: f64 = row.iter().map(|x| (x.f64() - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse - row[tgt as usize].f64();
        let dr = &mut dlogits[r * vocab..(r + 1) * vocab];
        for (j, out) in dr.iter_mut().enumerate() {
            let p = (row[j].f64() - lse).exp();
            let onehot = if j == tgt as usize { 1.0 } else { 0.0 };
            *out = F::lit((p - onehot) / n as f64);
        }
    }
    (total / n as f64, dlogits)
}

/// Mean cross-entropy over every next-token position of a batch of windows
/// (all of one length, at most `block + 1` tokens) together with exact
/// gradients.
pub fn loss_and_grads<F: Scalar>(params: &ModelParams<F>, batch: &[Vec<u32>]) -> Result<(f64, Vec<F>), ModelError> {
    let mut ws = Workspace::new();
    let mut grads = Vec::new();
    let loss = loss_and_grads_into(params, batch, &mut ws, &mut grads)?;
    Ok((loss, grads))
}

/// [`loss_and_grads`] reusing caller-owned buffers.
pub fn loss_and_grads_into<F: Scalar>(
    params: &ModelParams<F>,
    batch: &[Vec<u32>],
    ws: &mut Workspace<F>,
    grads: &mut Vec<F>,
) -> Result<f64, ModelError> {
    let (inputs, targets, b, t) = split_batch(batch)?;
    forward_into(params, &inputs, b, t, ws)?;
    let (loss, dlogits) = cross_entropy(ws.logits(), &targets, params.cfg().vocab_size);
    backward_into(params, ws, &dlogits, grads);
    Ok(loss)
}

/// Loss only.
pub fn loss<F: Scalar>(params: &ModelParams<F>, batch: &[Vec<u32>]) -> Result<f64, ModelError> {
    let mut ws = Workspace::new();
    loss_with(params, batch, &mut ws)
}

pub fn loss_with<F: Scalar>(params: &ModelParams<F>, batch: &[Vec<u32>], ws: &mut Workspace<F>) -> Result<f64, ModelError> {
    let (inputs, targets, b, t) = split_batch(batch)?;
    forward_into(params, &inputs, b, t, ws)?;
    let vocab = params.cfg().vocab_size;
    let mut total = 0.0;
    for (r, &tgt) in targets.iter().enumerate() {
        let row = &ws.logits[r * vocab..(r + 1) * vocab];
        let max = row.iter().fold(f64::NEG_INFINITY, |m, x| m.max(x.f64()));
        let sum: f64 = row.iter().map(|x| (x.f64() - max).exp()).sum();
        total += max + sum.ln() - row[tgt as usize].f64();
    }
    Ok(total / targets.len() as f64)
}

fn split_batch(batch: &[Vec<u32>]) -> Result<(Vec<u32>, Vec<u32>, usize, usize), ModelError> {
    let first = batch.first().ok_or(ModelError::EmptyBatch)?;
    let width = first.len();
    if width < 2 {
        return Err(ModelError::EmptyWindow);
    }
    let t = width - 1;
    let mut inputs = Vec::with_capacity(batch.len() * t);
    let mut targets = Vec::with_capacity(batch.len() * t);
    for (row, w) in batch.iter().enumerate() {
        if w.len() != width {
            return Err(ModelError::RaggedBatch { row, len: w.len(), expected: width });
        }
        inputs.extend_from_slice(&w[..t]);
        targets.extend_from_slice(&w[1..]);
    }
    Ok((inputs, targets, batch.len(), t))
}
