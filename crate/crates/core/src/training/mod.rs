//! Budget-dropout training: sample a budget, run forward and backward at
//! that budget, clip, and apply a masked AdamW update.

pub mod optimizer;
pub mod sampler;
pub mod trainer;

use serde::{Deserialize, Serialize};

pub use optimizer::{adamw_step, adamw_update, clip_global_norm, ActiveSet, AdamWConfig, AdamWState, LrSchedule};
pub use sampler::{BudgetSampler, SamplerMode};
pub use trainer::{train_step, LogRecord, StepMetrics, TrainSummary, Trainer};

use crate::error::{Error, Result};

fn default_warmup() -> f64 {
    0.05
}
fn default_final_frac() -> f64 {
    0.1
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}
fn default_clip() -> f64 {
    1.0
}
fn default_lr() -> f64 {
    3e-4
}
fn default_sampler() -> SamplerMode {
    SamplerMode::UniformSet
}
fn default_max_skip() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: u64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_warmup")]
    pub warmup_frac: f64,
    /// Final learning rate as a fraction of the peak.
    #[serde(default = "default_final_frac")]
    pub final_lr_frac: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub adam_eps: f64,
    #[serde(default = "default_clip")]
    pub clip_norm: f64,
    /// `full` disables budget dropout.
    #[serde(default = "default_sampler")]
    pub sampler: SamplerMode,
    /// Steps between log records; 0 logs only the last step.
    #[serde(default)]
    pub log_every: u64,
    /// Steps between periodic checkpoints; 0 disables them.
    #[serde(default)]
    pub checkpoint_every: u64,
    /// Fraction of skipped (non-finite) steps above which a run fails.
    #[serde(default = "default_max_skip")]
    pub max_skip_frac: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 8,
            steps: 1000,
            lr: default_lr(),
            warmup_frac: default_warmup(),
            final_lr_frac: default_final_frac(),
            weight_decay: 0.0,
            beta1: default_beta1(),
            beta2: default_beta2(),
            adam_eps: default_adam_eps(),
            clip_norm: default_clip(),
            sampler: default_sampler(),
            log_every: 0,
            checkpoint_every: 0,
            max_skip_frac: default_max_skip(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size must be positive"));
        }
        if self.steps == 0 {
            return Err(Error::config("train.steps must be at least 1"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::config("train.clip_norm must be positive"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config("train.lr must be positive"));
        }
        if !(0.0..=1.0).contains(&self.warmup_frac) || !(0.0..=1.0).contains(&self.final_lr_frac) {
            return Err(Error::config("train.warmup_frac and train.final_lr_frac must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("train.beta1 and train.beta2 must lie in [0, 1)"));
        }
        if !(self.adam_eps > 0.0) || self.weight_decay < 0.0 {
            return Err(Error::config("train.adam_eps must be positive and weight_decay non-negative"));
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule::new(self.lr, self.steps, self.warmup_frac, self.final_lr_frac)
    }
}
