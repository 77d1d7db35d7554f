//! AdamW with structural masking, global-norm clipping and the learning-rate
//! schedule.

use std::f64::consts::PI;

use crate::autograd::GradientSet;
use crate::error::{Error, Result};
use crate::io::{ByteReader, ByteWriter};
use crate::model::config::TruncationMode;
use crate::model::params::{ModelParams, TensorInfo, TensorRole};

pub const OPTIMIZER_MAGIC: &[u8; 4] = b"ESOP";
pub const OPTIMIZER_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Linear warmup, then cosine decay from `peak` to `final_frac * peak`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub peak: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
    pub final_frac: f64,
}

impl LrSchedule {
    pub fn new(peak: f64, total_steps: u64, warmup_frac: f64, final_frac: f64) -> Self {
        LrSchedule {
            peak,
            warmup_steps: (warmup_frac * total_steps as f64).ceil() as u64,
            total_steps,
            final_frac,
        }
    }

    /// Learning rate for 0-based `step`.
    pub fn at(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            return self.peak * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.total_steps.saturating_sub(self.warmup_steps).max(1);
        let progress = ((step - self.warmup_steps) as f64 / span as f64).min(1.0);
        let floor = self.final_frac * self.peak;
        floor + (self.peak - floor) * 0.5 * (1.0 + (PI * progress).cos())
    }
}

/// Scales all gradients to global norm `clip_norm` when they exceed it.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut GradientSet, clip_norm: f64) -> Result<f64> {
    if !grads.grads.is_finite() {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    let norm = grads.global_norm();
    if norm > clip_norm {
        grads.grads.scale_all(clip_norm / norm);
    }
    Ok(norm)
}

/// Which parameters a step at a given budget can touch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ActiveSet {
    pub budget: usize,
    pub capacity: usize,
    pub gate_enabled: bool,
    pub truncation: TruncationMode,
}

impl ActiveSet {
    /// Length of the active prefix of a tensor's row-major data.
    pub fn active_len(&self, info: &TensorInfo) -> usize {
        let support = match self.truncation {
            TruncationMode::MaskedSoftmax => self.budget,
            TruncationMode::DirectPrefix => self.capacity,
        };
        match info.role {
            TensorRole::Shared => info.len(),
            TensorRole::Mixing(k) => {
                if k < self.budget {
                    info.len()
                } else {
                    0
                }
            }
            TensorRole::GateHidden if !self.gate_enabled => 0,
            TensorRole::GateHidden => info.len(),
            TensorRole::GateLogitWeight | TensorRole::GateLogitBias if !self.gate_enabled => 0,
            TensorRole::GateLogitWeight => support * info.cols,
            TensorRole::GateLogitBias => support,
        }
    }
}

/// First and second moments plus per-element update counts (for bias
/// correction under masking).
#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub counts: Vec<Vec<u64>>,
    pub steps: u64,
}

impl AdamWState {
    pub fn new(params: &ModelParams) -> Self {
        AdamWState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            counts: params.tensors().iter().map(|(_, t)| vec![0; t.len()]).collect(),
            steps: 0,
        }
    }

    pub fn write(&self, w: &mut ByteWriter) {
        w.bytes(OPTIMIZER_MAGIC);
        w.u32(OPTIMIZER_VERSION);
        w.u64(self.steps);
        for (((_, m), (_, v)), c) in self.m.tensors().iter().zip(self.v.tensors()).zip(&self.counts) {
            w.f64_slice(m);
            w.f64_slice(v);
            for &n in c {
                w.u64(n);
            }
        }
    }

    /// Reads state written by [`write`](Self::write) for parameters shaped
    /// like `params`.
    pub fn read(r: &mut ByteReader<'_>, params: &ModelParams) -> Result<Self> {
        r.magic(OPTIMIZER_MAGIC)?;
        let version = r.u32()?;
        if version != OPTIMIZER_VERSION {
            return Err(Error::format(format!("optimizer state version {version}")));
        }
        let mut state = AdamWState::new(params);
        state.steps = r.u64()?;
        let mut m = state.m.tensors_mut();
        let mut v = state.v.tensors_mut();
        for ((mt, vt), ct) in m.iter_mut().zip(v.iter_mut()).zip(state.counts.iter_mut()) {
            for x in mt.iter_mut() {
                *x = r.f64()?;
            }
            for x in vt.iter_mut() {
                *x = r.f64()?;
            }
            for n in ct.iter_mut() {
                *n = r.u64()?;
            }
        }
        drop(m);
        drop(v);
        Ok(state)
    }
}

/// Decoupled-weight-decay Adam over the active part of every tensor.
/// Inactive elements keep their value, moments and count. Weight decay
/// applies to matrices only.
pub fn adamw_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamWState,
    lr: f64,
    hp: &AdamWConfig,
    active: &ActiveSet,
) -> Result<()> {
    if !params.same_structure(grads) || !params.same_structure(&state.m) {
        return Err(Error::structural("optimizer tensors do not match the parameters"));
    }
    let infos = params.tensor_infos();
    let g = grads.tensors();
    let mut m = state.m.tensors_mut();
    let mut v = state.v.tensors_mut();
    for (ti, p) in params.tensors_mut().into_iter().enumerate() {
        let info = &infos[ti];
        let n = active.active_len(info);
        let wd = if info.is_matrix() { hp.weight_decay } else { 0.0 };
        adamw_update(
            &mut p[..n],
            &g[ti].1[..n],
            &mut m[ti][..n],
            &mut v[ti][..n],
            &mut state.counts[ti][..n],
            lr,
            wd,
            hp,
        );
    }
    state.steps += 1;
    Ok(())
}

/// Element-wise AdamW update.
#[allow(clippy::too_many_arguments)]
pub fn adamw_update(
    p: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    counts: &mut [u64],
    lr: f64,
    weight_decay: f64,
    hp: &AdamWConfig,
) {
    for i in 0..p.len() {
        counts[i] += 1;
        let c = counts[i] as i32;
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g[i];
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g[i] * g[i];
        let mhat = m[i] / (1.0 - hp.beta1.powi(c));
        let vhat = v[i] / (1.0 - hp.beta2.powi(c));
        p[i] -= lr * (mhat / (vhat.sqrt() + hp.eps) + weight_decay * p[i]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_shape() {
        let s = LrSchedule::new(1.0, 100, 0.05, 0.1);
        assert_eq!(s.warmup_steps, 5);
        assert!((s.at(0) - 0.2).abs() < 1e-15);
        assert!((s.at(4) - 1.0).abs() < 1e-15);
        assert!((s.at(5) - 1.0).abs() < 1e-15);
        assert!((s.at(100) - 0.1).abs() < 1e-15);
        assert!((0..99).all(|i| i < 4 || s.at(i + 1) <= s.at(i)));
    }

    #[test]
    fn first_step_is_signed_lr() {
        let hp = AdamWConfig::default();
        let (mut p, mut m, mut v, mut c) = (vec![1.0, 1.0], vec![0.0; 2], vec![0.0; 2], vec![0; 2]);
        adamw_update(&mut p, &[3.0, -0.01], &mut m, &mut v, &mut c, 0.1, 0.0, &hp);
        assert!((p[0] - 0.9).abs() < 1e-8 && (p[1] - 1.1).abs() < 1e-6);
    }

    #[test]
    fn decay_only_and_zero_gradient() {
        let hp = AdamWConfig::default();
        let (mut p, mut m, mut v, mut c) = (vec![2.0], vec![0.0], vec![0.0], vec![0]);
        adamw_update(&mut p, &[0.0], &mut m, &mut v, &mut c, 0.1, 0.0, &hp);
        assert_eq!(p, vec![2.0]);
        adamw_update(&mut p, &[0.0], &mut m, &mut v, &mut c, 0.1, 0.5, &hp);
        assert!((p[0] - 2.0 * (1.0 - 0.05)).abs() < 1e-15);
    }
}
