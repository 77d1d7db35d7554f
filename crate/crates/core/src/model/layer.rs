//! The budgeted spectral layer
//! `y(t) = D u(t) + sum_{k<K} α_k(t) σ_k^{1/4} M_k (φ_k * u)(t)`.

use std::sync::Arc;

use super::config::{Budget, TruncationMode};
use super::gate::{gelu, softmax_into};
use super::params::LayerParams;
use crate::basis::SpectralBasis;
use crate::error::{Error, Result};
use crate::linalg::{dot, FilterBankConv, Matrix, Sequence};

/// A basis plus the convolution engine over its scaled filters, shared
/// read-only by every layer of a model.
#[derive(Clone, Debug)]
pub struct SpectralEngine {
    basis: Arc<SpectralBasis>,
    bank: FilterBankConv,
}

impl SpectralEngine {
    pub fn new(basis: SpectralBasis) -> Result<Self> {
        let bank = basis.filter_bank()?;
        Ok(SpectralEngine {
            basis: Arc::new(basis),
            bank,
        })
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    pub fn bank(&self) -> &FilterBankConv {
        &self.bank
    }

    pub fn seq_len(&self) -> usize {
        self.basis.seq_len()
    }

    pub fn capacity(&self) -> usize {
        self.basis.capacity()
    }
}

/// Behaviour switches that distinguish the ablation variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerMode {
    pub gate_enabled: bool,
    pub truncation: TruncationMode,
}

impl Default for LayerMode {
    fn default() -> Self {
        LayerMode {
            gate_enabled: true,
            truncation: TruncationMode::MaskedSoftmax,
        }
    }
}

/// Floating-point operation counts of one layer forward, by kernel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LayerFlops {
    pub convolution: u64,
    pub mixing: u64,
    pub skip: u64,
    pub gate: u64,
}

impl LayerFlops {
    pub fn total(&self) -> u64 {
        self.convolution + self.mixing + self.skip + self.gate
    }

    pub fn add(&mut self, o: &LayerFlops) {
        self.convolution += o.convolution;
        self.mixing += o.mixing;
        self.skip += o.skip;
        self.gate += o.gate;
    }
}

/// Forward activations retained for the backward pass.
#[derive(Clone, Debug)]
pub struct LayerCache {
    pub(crate) input: Sequence,
    pub(crate) budget: usize,
    pub(crate) capacity: usize,
    pub(crate) mode: LayerMode,
    /// `σ_k^{1/4} (φ_k * u)` for `k < K`.
    pub(crate) features: Vec<Sequence>,
    /// Gate pre-activations `W1 u + b1` (`L × d_g`); empty when the gate is off.
    pub(crate) hidden_pre: Matrix,
    pub(crate) hidden: Matrix,
    /// Raw logits over the softmax support (`L × S`).
    pub(crate) logits: Matrix,
    /// `‖s(t)‖` over the support.
    pub(crate) logit_norms: Vec<f64>,
    /// Softmax over the support (`L × S`).
    pub(crate) support_weights: Matrix,
    /// Final mixture weights, zero beyond `K` (`L × K̄`).
    pub(crate) alpha: Matrix,
    pub(crate) flops: LayerFlops,
}

impl LayerCache {
    pub fn budget(&self) -> usize {
        self.budget
    }

    /// Mixture weights `α(t)` as an `L × K̄` matrix.
    pub fn alpha(&self) -> &Matrix {
        &self.alpha
    }

    pub fn logits(&self) -> &Matrix {
        &self.logits
    }

    pub fn features(&self) -> &[Sequence] {
        &self.features
    }

    pub fn flops(&self) -> LayerFlops {
        self.flops
    }

    /// Number of channels the softmax is normalised over.
    pub fn support(&self) -> usize {
        self.support_weights.cols()
    }
}

fn check_shapes(u: &Sequence, p: &LayerParams, engine: &SpectralEngine, k: usize) -> Result<()> {
    let d = p.skip.cols();
    if u.cols() != d || p.skip.rows() != d {
        return Err(Error::structural(format!(
            "layer expects width {d}, input has {} channels",
            u.cols()
        )));
    }
    if u.rows() != engine.seq_len() {
        return Err(Error::structural(format!(
            "basis built for L={}, input has {} timesteps",
            engine.seq_len(),
            u.rows()
        )));
    }
    if p.capacity() != engine.capacity() {
        return Err(Error::structural(format!(
            "layer has {} mixing matrices, basis capacity is {}",
            p.capacity(),
            engine.capacity()
        )));
    }
    if k == 0 || k > p.capacity() {
        return Err(Error::Budget {
            budget: k,
            capacity: p.capacity(),
            reason: "budget must lie in 2..=K̄",
        });
    }
    Ok(())
}

/// Gate MLP over all timesteps: `(pre-activation, hidden, logits)` with
/// logits restricted to the first `support` channels.
fn gate_forward(u: &Sequence, p: &LayerParams, support: usize) -> (Matrix, Matrix, Matrix) {
    let g = &p.gate;
    let mut pre = u.matmul_t(&g.w1);
    pre.add_row_vector(&g.b1);
    let mut hidden = pre.clone();
    hidden.as_mut_slice().iter_mut().for_each(|v| *v = gelu(*v));
    let dg = g.w1.rows();
    let w2 = Matrix::from_vec(support, dg, g.w2.as_slice()[..support * dg].to_vec())
        .expect("prefix of W2 has a consistent shape");
    let mut logits = hidden.matmul_t(&w2);
    logits.add_row_vector(&g.b2[..support]);
    (pre, hidden, logits)
}

/// Budgeted forward pass. `budget` must not exceed the basis capacity.
pub fn layer_forward(
    u: &Sequence,
    p: &LayerParams,
    engine: &SpectralEngine,
    budget: Budget,
    mode: LayerMode,
) -> Result<(Sequence, LayerCache)> {
    let k = budget.get();
    check_shapes(u, p, engine, k)?;
    let (len, d) = u.shape();
    let capacity = p.capacity();
    let support = match mode.truncation {
        TruncationMode::MaskedSoftmax => k,
        TruncationMode::DirectPrefix => capacity,
    };
    let mut flops = LayerFlops::default();

    let (hidden_pre, hidden, logits) = if mode.gate_enabled {
        let dg = p.gate.w1.rows();
        flops.gate = (len * (2 * d * dg + 2 * dg * support)) as u64 + (len * (5 * support + 4)) as u64;
        gate_forward(u, p, support)
    } else {
        flops.gate = (len * 5 * support) as u64;
        (Matrix::zeros(0, 0), Matrix::zeros(0, 0), Matrix::zeros(len, support))
    };

    let eps = p.gate.eps;
    let scale = (support as f64).sqrt();
    let mut logit_norms = vec![0.0; len];
    let mut support_weights = Matrix::zeros(len, support);
    let mut alpha = Matrix::zeros(len, capacity);
    let mut scaled = vec![0.0; support];
    for t in 0..len {
        let s = logits.row(t);
        let r = dot(s, s).sqrt();
        logit_norms[t] = r;
        let c = scale / (r + eps);
        for (o, v) in scaled.iter_mut().zip(s) {
            *o = v * c;
        }
        let w = support_weights.row_mut(t);
        softmax_into(&scaled, w);
        alpha.row_mut(t)[..k].copy_from_slice(&support_weights.row(t)[..k]);
    }

    let features = engine.bank().forward(u, k)?;
    flops.convolution = engine.bank().forward_flops(d, k);

    let mut y = u.matmul_t(&p.skip);
    flops.skip = (2 * len * d * d) as u64;

    let mut weighted = Matrix::zeros(len, d);
    for (ch, feat) in features.iter().enumerate() {
        for t in 0..len {
            let a = alpha[(t, ch)];
            for (o, f) in weighted.row_mut(t).iter_mut().zip(feat.row(t)) {
                *o = a * f;
            }
        }
        weighted.matmul_t_acc(&p.mixing[ch], &mut y);
    }
    flops.mixing = (k * len * (2 * d * d + d)) as u64;

    let cache = LayerCache {
        input: u.clone(),
        budget: k,
        capacity,
        mode,
        features,
        hidden_pre,
        hidden,
        logits,
        logit_norms,
        support_weights,
        alpha,
        flops,
    };
    Ok((y, cache))
}
