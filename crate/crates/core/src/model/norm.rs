//! Per-timestep normalisation over the `d` channels.

use super::config::NormKind;
use super::params::NormParams;
use crate::linalg::{Matrix, Sequence};

pub const NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct NormCache {
    pub(crate) kind: NormKind,
    /// Normalised input before the affine map.
    pub(crate) normalized: Matrix,
    /// `1 / std` (layer norm) or `1 / rms` per timestep.
    pub(crate) inv_scale: Vec<f64>,
}

pub fn norm_forward(x: &Sequence, p: &NormParams, kind: NormKind) -> (Sequence, NormCache) {
    let (len, d) = x.shape();
    let mut normalized = Matrix::zeros(len, d);
    let mut inv_scale = vec![0.0; len];
    let mut out = Matrix::zeros(len, d);
    for t in 0..len {
        let row = x.row(t);
        let mean = match kind {
            NormKind::LayerNorm => row.iter().sum::<f64>() / d as f64,
            NormKind::RmsNorm => 0.0,
        };
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + NORM_EPS).sqrt();
        inv_scale[t] = inv;
        let n = normalized.row_mut(t);
        for (o, v) in n.iter_mut().zip(row) {
            *o = (v - mean) * inv;
        }
        let n = normalized.row(t).to_vec();
        for (j, o) in out.row_mut(t).iter_mut().enumerate() {
            *o = n[j] * p.scale[j] + p.shift[j];
        }
    }
    (
        out,
        NormCache {
            kind,
            normalized,
            inv_scale,
        },
    )
}

/// Accumulates `dscale`, `dshift` into `grads` and returns `dL/dx`.
pub fn norm_backward(cache: &NormCache, p: &NormParams, upstream: &Sequence, grads: &mut NormParams) -> Sequence {
    let (len, d) = upstream.shape();
    let mut dx = Matrix::zeros(len, d);
    let mut dn = vec![0.0; d];
    for t in 0..len {
        let g = upstream.row(t);
        let n = cache.normalized.row(t);
        for j in 0..d {
            grads.scale[j] += g[j] * n[j];
            grads.shift[j] += g[j];
            dn[j] = g[j] * p.scale[j];
        }
        let inv = cache.inv_scale[t];
        let mean_dn = match cache.kind {
            NormKind::LayerNorm => dn.iter().sum::<f64>() / d as f64,
            NormKind::RmsNorm => 0.0,
        };
        let mean_dn_n = dn.iter().zip(n).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        for (j, o) in dx.row_mut(t).iter_mut().enumerate() {
            *o = inv * (dn[j] - mean_dn - n[j] * mean_dn_n);
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_row_normalises_to_shift() {
        let x = Matrix::from_fn(2, 4, |t, _| 3.0 + t as f64);
        let p = NormParams {
            scale: vec![2.0; 4],
            shift: vec![0.5, -0.5, 0.0, 1.0],
        };
        let (y, _) = norm_forward(&x, &p, NormKind::LayerNorm);
        assert_eq!(y.row(0), &p.shift[..]);
        assert_eq!(y.row(1), &p.shift[..]);
    }

    #[test]
    fn layer_norm_output_is_standardised() {
        let x = Matrix::from_fn(3, 6, |t, j| (t * j) as f64 + j as f64 * 0.3);
        let (y, _) = norm_forward(&x, &NormParams::identity(6), NormKind::LayerNorm);
        for t in 0..3 {
            let r = y.row(t);
            let mean = r.iter().sum::<f64>() / 6.0;
            let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        for kind in [NormKind::LayerNorm, NormKind::RmsNorm] {
            let x = Matrix::from_fn(2, 5, |t, j| ((t + 1) * (j + 2)) as f64 * 0.37 - 1.0);
            let p = NormParams {
                scale: vec![1.5, 0.5, -1.0, 2.0, 0.7],
                shift: vec![0.1; 5],
            };
            let w = Matrix::from_fn(2, 5, |t, j| (t as f64 - 0.5) * (j as f64 + 0.3));
            let loss = |x: &Matrix| {
                let (y, _) = norm_forward(x, &p, kind);
                y.as_slice().iter().zip(w.as_slice()).map(|(a, b)| a * b).sum::<f64>()
            };
            let (_, cache) = norm_forward(&x, &p, kind);
            let mut g = NormParams {
                scale: vec![0.0; 5],
                shift: vec![0.0; 5],
            };
            let dx = norm_backward(&cache, &p, &w, &mut g);
            for i in 0..10 {
                let mut a = x.clone();
                let mut b = x.clone();
                a.as_mut_slice()[i] += 1e-6;
                b.as_mut_slice()[i] -= 1e-6;
                let fd = (loss(&a) - loss(&b)) / 2e-6;
                assert!((fd - dx.as_slice()[i]).abs() < 1e-6, "{kind:?} {i}");
            }
        }
    }
}
