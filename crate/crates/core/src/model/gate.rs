//! Input-adaptive mixture weights over spectral channels.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::params::GateParams;
use crate::error::{Error, Result};
use crate::linalg::norm2;

/// Exact GELU, `x Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

/// `d/dx [x Φ(x)] = Φ(x) + x φ(x)`.
pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    cdf + x * pdf
}

/// `s = W2 GELU(W1 u + b1) + b2` for a single timestep; all `K̄` logits.
pub fn gate_logits(u: &[f64], g: &GateParams) -> Result<Vec<f64>> {
    if u.len() != g.w1.cols() {
        return Err(Error::structural(format!(
            "gate expects a {}-vector, got {}",
            g.w1.cols(),
            u.len()
        )));
    }
    let mut h = g.w1.matvec(u);
    for (v, b) in h.iter_mut().zip(&g.b1) {
        *v = gelu(*v + b);
    }
    let mut s = g.w2.matvec(&h);
    for (v, b) in s.iter_mut().zip(&g.b2) {
        *v += b;
    }
    Ok(s)
}

/// `s̃ = s_{1:K} √K / (‖s_{1:K}‖ + eps)`; reads only the first `k` logits.
pub fn rms_rescale(s: &[f64], k: usize, eps: f64) -> Result<Vec<f64>> {
    if k == 0 || k > s.len() {
        return Err(Error::structural(format!(
            "cannot rescale the first {k} of {} logits",
            s.len()
        )));
    }
    let active = &s[..k];
    let c = (k as f64).sqrt() / (norm2(active) + eps);
    Ok(active.iter().map(|v| v * c).collect())
}

/// Softmax over the `K = s̃.len()` active logits, zero-padded to `capacity`.
pub fn masked_softmax(scaled: &[f64], capacity: usize) -> Result<Vec<f64>> {
    if scaled.is_empty() || scaled.len() > capacity {
        return Err(Error::structural(format!(
            "masked softmax over {} logits with capacity {capacity}",
            scaled.len()
        )));
    }
    let mut alpha = vec![0.0; capacity];
    softmax_into(scaled, &mut alpha[..scaled.len()]);
    Ok(alpha)
}

/// Max-subtracted softmax of `x` written to `out`.
pub(crate) fn softmax_into(x: &[f64], out: &mut [f64]) {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - m).exp();
        z += *o;
    }
    out.iter_mut().for_each(|o| *o /= z);
}
