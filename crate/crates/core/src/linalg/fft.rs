//! Iterative radix-2 FFT over power-of-two lengths.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Precomputed twiddles and bit-reversal table for one transform length.
#[derive(Clone, Debug)]
pub struct FftPlan {
    len: usize,
    log2_len: u32,
    twiddles: Vec<Complex64>,
    bitrev: Vec<usize>,
}

impl FftPlan {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::structural(format!(
                "FFT length must be a power of two, got {len}"
            )));
        }
        let log2_len = len.trailing_zeros();
        let twiddles = (0..len / 2)
            .map(|k| {
                let theta = -2.0 * std::f64::consts::PI * k as f64 / len as f64;
                Complex64::new(theta.cos(), theta.sin())
            })
            .collect();
        let bitrev = (0..len)
            .map(|i| {
                if log2_len == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - log2_len)
                }
            })
            .collect();
        Ok(FftPlan {
            len,
            log2_len,
            twiddles,
            bitrev,
        })
    }

    /// Plan for linear convolution of two length-`n` operands: the smallest
    /// power of two `>= 2n - 1`.
    pub fn for_linear_convolution(n: usize) -> Result<Self> {
        FftPlan::new((2 * n.max(1) - 1).next_power_of_two())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Nominal real floating-point operations of one transform: 5 N log2 N.
    pub fn flops(&self) -> u64 {
        5 * self.len as u64 * self.log2_len as u64
    }

    /// In-place forward transform, `X[k] = sum_n x[n] e^{-2 pi i k n / N}`.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.transform(buf, false);
    }

    /// In-place inverse transform including the `1/N` normalisation.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.transform(buf, true);
        let inv = 1.0 / self.len as f64;
        buf.iter_mut().for_each(|v| *v *= inv);
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        assert_eq!(buf.len(), self.len, "buffer length does not match plan");
        let n = self.len;
        for i in 0..n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut half = 1;
        while half < n {
            let stride = n / (2 * half);
            for start in (0..n).step_by(2 * half) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let w = if inverse { w.conj() } else { w };
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            half *= 2;
        }
    }
}
