//! Causal convolution `out(t) = sum_{tau=0}^{t} f(tau) s(t - tau)` (0-based
//! `t`), applied channel-wise to a [`Sequence`].

use num_complex::Complex64;

use super::fft::FftPlan;
use super::matrix::{Matrix, Sequence};
use crate::error::{Error, Result};

fn check_lengths(filter: &[f64], signal: &Sequence) -> Result<()> {
    if filter.len() != signal.rows() {
        return Err(Error::structural(format!(
            "filter has {} taps but signal has {} timesteps",
            filter.len(),
            signal.rows()
        )));
    }
    Ok(())
}

/// O(L^2) reference evaluation of the causal convolution.
pub fn direct_causal_conv(filter: &[f64], signal: &Sequence) -> Result<Sequence> {
    check_lengths(filter, signal)?;
    let (len, dim) = signal.shape();
    let mut out = Matrix::zeros(len, dim);
    for t in 0..len {
        for tau in 0..=t {
            let f = filter[tau];
            if f == 0.0 {
                continue;
            }
            let src = signal.row(t - tau).to_vec();
            for (o, s) in out.row_mut(t).iter_mut().zip(&src) {
                *o += f * s;
            }
        }
    }
    Ok(out)
}

/// FFT route: both operands zero-padded to the smallest power of two
/// `>= 2L - 1`, multiplied pointwise in frequency, inverted and truncated to
/// `L`. Pairs of real channels share one complex transform.
pub fn fft_causal_conv(filter: &[f64], signal: &Sequence) -> Result<Sequence> {
    check_lengths(filter, signal)?;
    let len = signal.rows();
    let plan = FftPlan::for_linear_convolution(len)?;
    let spectrum = real_spectrum(&plan, filter);
    let x_spec = channel_spectra(&plan, signal);
    let mut out = Matrix::zeros(len, signal.cols());
    let mut buf = vec![Complex64::new(0.0, 0.0); plan.len()];
    for (pair, xs) in x_spec.iter().enumerate() {
        for ((b, x), f) in buf.iter_mut().zip(xs).zip(&spectrum) {
            *b = x * f;
        }
        plan.inverse(&mut buf);
        unpack_pair(&buf, pair, &mut out);
    }
    Ok(out)
}

fn real_spectrum(plan: &FftPlan, taps: &[f64]) -> Vec<Complex64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); plan.len()];
    for (b, &v) in buf.iter_mut().zip(taps) {
        b.re = v;
    }
    plan.forward(&mut buf);
    buf
}

/// Spectra of channel pairs `(2p, 2p + 1)` packed as `re + i im`.
fn channel_spectra(plan: &FftPlan, signal: &Sequence) -> Vec<Vec<Complex64>> {
    let (len, dim) = signal.shape();
    (0..dim.div_ceil(2))
        .map(|pair| {
            let mut buf = vec![Complex64::new(0.0, 0.0); plan.len()];
            pack_pair(signal, pair, len, &mut buf);
            plan.forward(&mut buf);
            buf
        })
        .collect()
}

#[inline]
fn pack_pair(signal: &Sequence, pair: usize, len: usize, buf: &mut [Complex64]) {
    let dim = signal.cols();
    let (a, b) = (2 * pair, 2 * pair + 1);
    for (t, slot) in buf.iter_mut().enumerate() {
        *slot = if t < len {
            let row = signal.row(t);
            Complex64::new(row[a], if b < dim { row[b] } else { 0.0 })
        } else {
            Complex64::new(0.0, 0.0)
        };
    }
}

#[inline]
fn unpack_pair(buf: &[Complex64], pair: usize, out: &mut Matrix) {
    let dim = out.cols();
    let (a, b) = (2 * pair, 2 * pair + 1);
    for t in 0..out.rows() {
        let row = out.row_mut(t);
        row[a] = buf[t].re;
        if b < dim {
            row[b] = buf[t].im;
        }
    }
}

/// A fixed bank of causal filters with their spectra precomputed, used by
/// the spectral layer for the forward features and the adjoint pass.
#[derive(Clone, Debug)]
pub struct FilterBankConv {
    len: usize,
    plan: FftPlan,
    spectra: Vec<Vec<Complex64>>,
}

impl FilterBankConv {
    pub fn new(filters: &[Vec<f64>]) -> Result<Self> {
        let len = filters
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::structural("empty filter bank"))?;
        if filters.iter().any(|f| f.len() != len) {
            return Err(Error::structural("filters in a bank must share one length"));
        }
        let plan = FftPlan::for_linear_convolution(len)?;
        let spectra = filters.iter().map(|f| real_spectrum(&plan, f)).collect();
        Ok(FilterBankConv { len, plan, spectra })
    }

    pub fn seq_len(&self) -> usize {
        self.len
    }

    pub fn num_filters(&self) -> usize {
        self.spectra.len()
    }

    /// Convolves `signal` with the first `count` filters.
    pub fn forward(&self, signal: &Sequence, count: usize) -> Result<Vec<Sequence>> {
        self.check(signal.rows(), count)?;
        let x_spec = channel_spectra(&self.plan, signal);
        let mut outs = vec![Matrix::zeros(self.len, signal.cols()); count];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.plan.len()];
        for (pair, xs) in x_spec.iter().enumerate() {
            for (spec, out) in self.spectra.iter().zip(outs.iter_mut()) {
                for ((b, x), f) in buf.iter_mut().zip(xs).zip(spec) {
                    *b = x * f;
                }
                self.plan.inverse(&mut buf);
                unpack_pair(&buf, pair, out);
            }
        }
        Ok(outs)
    }

    /// Adjoint of [`forward`](Self::forward): `sum_k corr(filter_k, grads[k])`
    /// where `corr(t) = sum_tau f(tau) g(t + tau)`, accumulated in frequency
    /// by conjugate multiplication and inverted once per channel pair.
    pub fn adjoint_sum(&self, grads: &[Sequence]) -> Result<Sequence> {
        let dim = grads
            .first()
            .map(Matrix::cols)
            .ok_or_else(|| Error::structural("adjoint of an empty feature set"))?;
        self.check(self.len, grads.len())?;
        if grads.iter().any(|g| g.shape() != (self.len, dim)) {
            return Err(Error::structural("feature gradients must share one shape"));
        }
        let n = self.plan.len();
        let mut out = Matrix::zeros(self.len, dim);
        let mut acc = vec![Complex64::new(0.0, 0.0); n];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for pair in 0..dim.div_ceil(2) {
            acc.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            for (g, spec) in grads.iter().zip(&self.spectra) {
                pack_pair(g, pair, self.len, &mut buf);
                self.plan.forward(&mut buf);
                for ((a, b), f) in acc.iter_mut().zip(&buf).zip(spec) {
                    *a += b * f.conj();
                }
            }
            self.plan.inverse(&mut acc);
            unpack_pair(&acc, pair, &mut out);
        }
        Ok(out)
    }

    /// Floating-point operations executed by [`forward`](Self::forward) for a
    /// `dim`-channel signal and `count` filters.
    pub fn forward_flops(&self, dim: usize, count: usize) -> u64 {
        let pairs = dim.div_ceil(2) as u64;
        let n = self.plan.len() as u64;
        pairs * self.plan.flops() + count as u64 * pairs * (self.plan.flops() + 6 * n)
    }

    fn check(&self, len: usize, count: usize) -> Result<()> {
        if len != self.len {
            return Err(Error::structural(format!(
                "signal length {len} does not match filter length {}",
                self.len
            )));
        }
        if count > self.spectra.len() {
            return Err(Error::structural(format!(
                "requested {count} filters from a bank of {}",
                self.spectra.len()
            )));
        }
        Ok(())
    }
}
