//! Minibatch training over a flat token stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{loss_and_grads_into, ModelError, Workspace};
use crate::optim::{clip_grad_norm, AdamW, OptimError};
use crate::params::ModelParams;
use crate::scalar::Scalar;
use crate::schedule::{lr_at, PlanError, TrainPlan};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("token stream has {len} tokens; training needs more than {needed}")]
    StreamTooShort { len: usize, needed: usize },
}

/// Serializable position of the window sampler.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn from_rng(rng: &ChaCha8Rng) -> Self {
        RngState { seed: rng.get_seed(), stream: rng.get_stream(), word_pos: rng.get_word_pos() }
    }

    pub fn to_rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub iter: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn last_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.train_loss)
    }
}

/// Owns the model during training. One `Trainer` per curriculum stage: a
/// fresh one starts with zeroed optimizer moments and the plan's base rate.
pub struct Trainer<F> {
    pub params: ModelParams<F>,
    pub opt: AdamW<F>,
    pub plan: TrainPlan,
    /// Completed optimizer steps.
    pub iter: usize,
    rng: ChaCha8Rng,
    ws: Workspace<F>,
    grads: Vec<F>,
}

impl<F: Scalar> Trainer<F> {
    pub fn new(params: ModelParams<F>, plan: TrainPlan, seed: u64) -> Result<Self, TrainError> {
        plan.validate()?;
        let opt = AdamW::new(&params.layout, plan.optimizer);
        Ok(Trainer { params, opt, plan, iter: 0, rng: ChaCha8Rng::seed_from_u64(seed), ws: Workspace::new(), grads: Vec::new() })
    }

    /// Restores a run saved mid-way (see [`crate::checkpoint`]).
    pub fn resume(params: ModelParams<F>, opt: AdamW<F>, plan: TrainPlan, rng: RngState, iter: usize) -> Result<Self, TrainError> {
        plan.validate()?;
        Ok(Trainer { params, opt, plan, iter, rng: rng.to_rng(), ws: Workspace::new(), grads: Vec::new() })
    }

    pub fn rng_state(&self) -> RngState {
        RngState::from_rng(&self.rng)
    }

    pub fn is_done(&self) -> bool {
        self.iter >= self.plan.total_iters
    }

    fn sample_batch(&mut self, stream: &[u32]) -> Result<Vec<Vec<u32>>, TrainError> {
        let win = self.params.cfg().block_size + 1;
        if stream.len() <= win {
            return Err(TrainError::StreamTooShort { len: stream.len(), needed: win });
        }
        let span = stream.len() - win + 1;
        Ok((0..self.plan.batch_size)
            .map(|_| {
                let s = self.rng.gen_range(0..span);
                stream[s..s + win].to_vec()
            })
            .collect())
    }

    /// One optimizer step; returns the pre-update training loss.
    pub fn step(&mut self, stream: &[u32]) -> Result<LogRow, TrainError> {
        let batch = self.sample_batch(stream)?;
        let loss = loss_and_grads_into(&self.params, &batch, &mut self.ws, &mut self.grads)?;
        if let Some(max) = self.plan.grad_clip {
            clip_grad_norm(&mut self.grads, max);
        }
        let lr = lr_at(&self.plan, self.iter);
        self.opt.step(&mut self.params, &self.grads, lr)?;
        self.iter += 1;
        Ok(LogRow { iter: self.iter - 1, lr, train_loss: loss, val_loss: None })
    }

    /// Trains to `plan.total_iters`. Every `log_interval` steps a row is
    /// logged and passed to `on_row`; every `eval_interval` steps (and after
    /// the final one) `eval` supplies a validation loss for that row.
    pub fn run(
        &mut self,
        stream: &[u32],
        mut eval: Option<&mut dyn FnMut(&ModelParams<F>) -> f64>,
        mut on_row: impl FnMut(&LogRow),
    ) -> Result<TrainLog, TrainError> {
        let mut log = TrainLog::default();
        while !self.is_done() {
            let mut row = self.step(stream)?;
            let done = self.iter;
            let last = self.is_done();
            let ev = self.plan.eval_interval;
            if let Some(f) = eval.as_mut() {
                if (ev > 0 && done % ev == 0) || (ev > 0 && last) {
                    row.val_loss = Some(f(&self.params));
                }
            }
            if done % self.plan.log_interval == 0 || last || row.val_loss.is_some() {
                on_row(&row);
                log.rows.push(row);
            }
        }
        Ok(log)
    }
}

/// Trains `params` on `stream` from scratch under `plan`.
pub fn train<F: Scalar>(
    params: ModelParams<F>,
    plan: &TrainPlan,
    stream: &[u32],
    seed: u64,
    eval: Option<&mut dyn FnMut(&ModelParams<F>) -> f64>,
) -> Result<(ModelParams<F>, TrainLog), TrainError> {
    let mut t = Trainer::new(params, plan.clone(), seed)?;
    let log = t.run(stream, eval, |_| {})?;
    Ok((t.params, log))
}
