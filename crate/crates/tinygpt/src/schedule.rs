use thiserror::Error;

use crate::optim::AdamWConfig;

/// Hyperparameters of one training run (one curriculum stage).
#[derive(Clone, Debug, PartialEq)]
pub struct TrainPlan {
    pub total_iters: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    /// Fractions of `total_iters` at which the learning rate is multiplied
    /// by `decay_factor`.
    pub milestone_fracs: Vec<f64>,
    pub decay_factor: f64,
    pub grad_clip: Option<f64>,
    pub optimizer: AdamWConfig,
    pub log_interval: usize,
    /// Validation hook cadence; 0 disables it.
    pub eval_interval: usize,
}

impl Default for TrainPlan {
    fn default() -> Self {
        TrainPlan {
            total_iters: 120_000,
            batch_size: 64,
            base_lr: 1e-3,
            milestone_fracs: vec![0.7, 0.8, 0.9],
            decay_factor: 0.1,
            grad_clip: Some(1.0),
            optimizer: AdamWConfig::default(),
            log_interval: 1,
            eval_interval: 0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("{0} must be positive")]
    NotPositive(&'static str),
    #[error("milestones must be strictly increasing inside (0, 1): {0:?}")]
    Milestones(Vec<f64>),
    #[error("decay factor {0} must lie in (0, 1)")]
    DecayFactor(f64),
}

impl TrainPlan {
    pub fn with_iters(total_iters: usize) -> Self {
        TrainPlan { total_iters, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.total_iters == 0 {
            return Err(PlanError::NotPositive("total_iters"));
        }
        if self.batch_size == 0 {
            return Err(PlanError::NotPositive("batch_size"));
        }
        if !(self.base_lr > 0.0) {
            return Err(PlanError::NotPositive("base_lr"));
        }
        if self.log_interval == 0 {
            return Err(PlanError::NotPositive("log_interval"));
        }
        let m = &self.milestone_fracs;
        let inside = m.iter().all(|&f| f > 0.0 && f < 1.0);
        let increasing = m.windows(2).all(|w| w[0] < w[1]);
        if !inside || !increasing {
            return Err(PlanError::Milestones(m.clone()));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return Err(PlanError::DecayFactor(self.decay_factor));
        }
        Ok(())
    }

    /// Iteration index at which each milestone takes effect.
    pub fn milestone_iters(&self) -> Vec<usize> {
        self.milestone_fracs.iter().map(|f| (f * self.total_iters as f64).round() as usize).collect()
    }
}

/// Step-decayed learning rate at 0-based iteration `iter`.
pub fn lr_at(plan: &TrainPlan, iter: usize) -> f64 {
    let passed = plan.milestone_iters().iter().filter(|&&m| iter >= m).count();
    plan.base_lr * plan.decay_factor.powi(passed as i32)
}
