use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::optimizer::{adamw_step, clip_global_norm, ActiveSet, AdamWConfig, AdamWState, LrSchedule};
use super::sampler::BudgetSampler;
use super::TrainConfig;
use crate::autograd::{batch_gradients, Example};
use crate::error::{Error, Result};
use crate::io::{ByteReader, ByteWriter};
use crate::model::checkpoint::Checkpoint;
use crate::model::config::{Budget, ModelConfig};
use crate::model::layer::SpectralEngine;
use crate::model::network::Model;
use crate::model::params::ModelParams;
use crate::seed;

const TRAINER_MAGIC: &[u8; 4] = b"ESTR";
const TRAINER_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepMetrics {
    pub step: u64,
    pub loss: f64,
    pub budget: usize,
    pub grad_norm: f64,
    pub lr: f64,
}

/// One line of the JSONL training log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogRecord {
    pub step: u64,
    /// Mean loss over the steps since the previous record.
    pub loss: f64,
    pub k_train_histogram: BTreeMap<usize, u64>,
    pub grad_norm: f64,
    pub lr: f64,
    pub skipped: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainSummary {
    pub steps: u64,
    pub skipped: u64,
    pub final_loss: f64,
    pub k_train_histogram: BTreeMap<usize, u64>,
}

/// One update: sample `K_train`, forward and backward at that budget,
/// clip, masked AdamW. Parameters and state are untouched when the loss or
/// gradient is non-finite (reported as a numeric error).
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    config: &ModelConfig,
    params: &mut ModelParams,
    engine: &SpectralEngine,
    batch: &[Example],
    budget: Budget,
    state: &mut AdamWState,
    lr: f64,
    hp: &AdamWConfig,
    clip_norm: f64,
    step: u64,
) -> Result<StepMetrics> {
    let mut grads = batch_gradients(config, params, engine, batch, budget)?;
    if !grads.loss.is_finite() {
        return Err(Error::Numeric(format!("loss is {} at step {step}", grads.loss)));
    }
    let grad_norm = clip_global_norm(&mut grads, clip_norm)?;
    let active = ActiveSet {
        budget: budget.get(),
        capacity: config.capacity,
        gate_enabled: config.gate_enabled,
        truncation: config.truncation,
    };
    adamw_step(params, &grads.grads, state, lr, hp, &active)?;
    Ok(StepMetrics {
        step,
        loss: grads.loss,
        budget: budget.get(),
        grad_norm,
        lr,
    })
}

/// Owns a model and its optimizer state. Every random choice is a pure
/// function of `(seed, step)`, so a resumed run replays the uninterrupted
/// trajectory.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: Model,
    pub train: TrainConfig,
    pub optimizer: AdamWState,
    sampler: BudgetSampler,
    schedule: LrSchedule,
    hp: AdamWConfig,
    batch_seed: u64,
    pub step: u64,
    pub skipped: u64,
    pub histogram: BTreeMap<usize, u64>,
}

impl Trainer {
    pub fn new(model: Model, train: TrainConfig) -> Result<Self> {
        train.validate()?;
        let root = model.config.seed;
        let sampler = BudgetSampler::new(
            train.sampler,
            &model.config.budget_set,
            model.config.capacity,
            seed::derive(root, seed::SAMPLER),
        )?;
        let optimizer = AdamWState::new(&model.params);
        Ok(Trainer {
            schedule: train.schedule(),
            hp: train.adamw(),
            batch_seed: seed::derive(root, seed::BATCH),
            sampler,
            optimizer,
            model,
            train,
            step: 0,
            skipped: 0,
            histogram: BTreeMap::new(),
        })
    }

    /// Fresh model initialised from the `init` stream of the config seed.
    pub fn from_config(config: ModelConfig, train: TrainConfig, engine: SpectralEngine) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, seed::INIT));
        let params = ModelParams::init(&config, &mut rng);
        Trainer::new(Model::new(config, params, engine)?, train)
    }

    pub fn sampler(&self) -> &BudgetSampler {
        &self.sampler
    }

    /// Batch indices for `step`, drawn with replacement.
    pub fn batch_indices(&self, step: u64, n: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.batch_seed);
        rng.set_stream(step);
        (0..self.train.batch_size).map(|_| rng.gen_range(0..n)).collect()
    }

    /// Runs one step on `data`. Non-finite steps are counted and skipped.
    pub fn step_once(&mut self, data: &[Example]) -> Result<Option<StepMetrics>> {
        if data.is_empty() {
            return Err(Error::Input("training split is empty".into()));
        }
        let step = self.step;
        let batch: Vec<Example> = self
            .batch_indices(step, data.len())
            .into_iter()
            .map(|i| data[i].clone())
            .collect();
        let budget = self.sampler.sample(step);
        let lr = self.schedule.at(step);
        let m = &mut self.model;
        let result = train_step(
            &m.config,
            &mut m.params,
            &m.engine,
            &batch,
            budget,
            &mut self.optimizer,
            lr,
            &self.hp,
            self.train.clip_norm,
            step,
        );
        self.step += 1;
        match result {
            Ok(metrics) => {
                *self.histogram.entry(budget.get()).or_default() += 1;
                Ok(Some(metrics))
            }
            Err(Error::Numeric(msg)) => {
                self.skipped += 1;
                log::warn!("skipping step {step}: {msg}");
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    /// Trains until `train.steps`, calling `on_log` per log record and
    /// `on_checkpoint` at the checkpoint cadence.
    pub fn run(
        &mut self,
        data: &[Example],
        mut on_log: impl FnMut(&LogRecord) -> Result<()>,
        mut on_checkpoint: impl FnMut(&Trainer) -> Result<()>,
    ) -> Result<TrainSummary> {
        let mut window_loss = 0.0;
        let mut window_n = 0u64;
        let mut window_hist: BTreeMap<usize, u64> = BTreeMap::new();
        let mut last = None;
        let mut final_loss = f64::NAN;
        while self.step < self.train.steps {
            if let Some(m) = self.step_once(data)? {
                window_loss += m.loss;
                window_n += 1;
                *window_hist.entry(m.budget).or_default() += 1;
                final_loss = m.loss;
                last = Some(m);
            }
            let done = self.step == self.train.steps;
            let cadence = self.train.log_every;
            if (cadence > 0 && self.step % cadence == 0) || done {
                let rec = LogRecord {
                    step: self.step,
                    loss: if window_n > 0 { window_loss / window_n as f64 } else { f64::NAN },
                    k_train_histogram: std::mem::take(&mut window_hist),
                    grad_norm: last.as_ref().map_or(f64::NAN, |m| m.grad_norm),
                    lr: self.schedule.at(self.step - 1),
                    skipped: self.skipped,
                };
                on_log(&rec)?;
                window_loss = 0.0;
                window_n = 0;
            }
            if self.train.checkpoint_every > 0 && self.step % self.train.checkpoint_every == 0 && !done {
                on_checkpoint(self)?;
            }
        }
        let frac = self.skipped as f64 / self.train.steps as f64;
        if frac > self.train.max_skip_frac {
            return Err(Error::Numeric(format!(
                "{} of {} steps were skipped for non-finite values",
                self.skipped, self.train.steps
            )));
        }
        Ok(TrainSummary {
            steps: self.step,
            skipped: self.skipped,
            final_loss,
            k_train_histogram: self.histogram.clone(),
        })
    }

    fn state_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(TRAINER_MAGIC);
        w.u32(TRAINER_VERSION);
        w.u64(self.step);
        w.u64(self.skipped);
        w.u64(self.histogram.len() as u64);
        for (&k, &n) in &self.histogram {
            w.u64(k as u64);
            w.u64(n);
        }
        self.optimizer.write(&mut w);
        w.into_inner()
    }

    /// Model checkpoint with the trainer and optimizer state appended.
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.model.config.clone(),
            params: self.model.params.clone(),
            auxiliary: Some(self.state_bytes()),
        }
    }

    /// Restores a trainer from [`checkpoint`](Self::checkpoint) output.
    pub fn resume(checkpoint: Checkpoint, engine: SpectralEngine, train: TrainConfig) -> Result<Self> {
        checkpoint.check_engine(&engine)?;
        let aux = checkpoint
            .auxiliary
            .clone()
            .ok_or_else(|| Error::format("checkpoint has no trainer state to resume from"))?;
        let model = Model::new(checkpoint.config, checkpoint.params, engine)?;
        let mut t = Trainer::new(model, train)?;
        let mut r = ByteReader::new(&aux);
        r.magic(TRAINER_MAGIC)?;
        if r.u32()? != TRAINER_VERSION {
            return Err(Error::format("unsupported trainer state version"));
        }
        t.step = r.u64()?;
        t.skipped = r.u64()?;
        let n = r.u64()? as usize;
        for _ in 0..n {
            let k = r.u64()? as usize;
            let c = r.u64()?;
            t.histogram.insert(k, c);
        }
        t.optimizer = AdamWState::read(&mut r, &t.model.params)?;
        r.finish()?;
        Ok(t)
    }
}
