use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::eig::symmetric_eig;
use super::matrix::{norm2, Matrix};
use crate::error::{Error, Result};

pub const SPECTRAL_NORM_TOL: f64 = 1e-8;
pub const SPECTRAL_NORM_MAX_ITERS: usize = 10_000;

/// Power-iteration estimate of the largest singular value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralNormEstimate {
    /// Never exceeds the true operator norm (up to rounding): it is the square
    /// root of a Rayleigh quotient of `m^T m`.
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Induced 2-norm of `m` via power iteration on `m^T m`.
pub fn spectral_norm(m: &Matrix) -> Result<SpectralNormEstimate> {
    if m.as_slice().iter().any(|v| v.is_nan()) {
        return Err(Error::structural("spectral_norm of a matrix containing NaN"));
    }
    if m.rows() == 0 || m.cols() == 0 || m.max_abs() == 0.0 {
        return Ok(SpectralNormEstimate {
            value: 0.0,
            converged: true,
            iterations: 0,
        });
    }
    // fixed start so repeated audits agree bit for bit
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f_5e11);
    let mut v: Vec<f64> = (0..m.cols()).map(|_| rng.gen_range(0.5..1.5)).collect();
    let n = norm2(&v);
    v.iter_mut().for_each(|x| *x /= n);

    let mut lambda = 0.0;
    for it in 1..=SPECTRAL_NORM_MAX_ITERS {
        let mv = m.matvec(&v);
        let mut w = m.t_matvec(&mv);
        let next = norm2(&mv).powi(2);
        let wn = norm2(&w);
        if wn == 0.0 {
            return Ok(SpectralNormEstimate {
                value: next.sqrt(),
                converged: true,
                iterations: it,
            });
        }
        w.iter_mut().for_each(|x| *x /= wn);
        let done = it > 1 && (next - lambda).abs() <= SPECTRAL_NORM_TOL * next;
        lambda = next;
        v = w;
        if done {
            return Ok(SpectralNormEstimate {
                value: lambda.sqrt(),
                converged: true,
                iterations: it,
            });
        }
    }
    Ok(SpectralNormEstimate {
        value: lambda.sqrt(),
        converged: false,
        iterations: SPECTRAL_NORM_MAX_ITERS,
    })
}

/// Induced 2-norm from the eigenvalues of `m^T m`; exact up to rounding,
/// used where a guaranteed upper bound matters more than speed.
pub fn operator_norm(m: &Matrix) -> Result<f64> {
    if m.rows() == 0 || m.cols() == 0 {
        return Ok(0.0);
    }
    if !m.is_finite() {
        return Err(Error::structural("operator norm of a non-finite matrix"));
    }
    let gram = m.t_matmul(m);
    // symmetrise away rounding so the eigensolver's symmetry check passes
    let sym = Matrix::from_fn(gram.rows(), gram.cols(), |i, j| 0.5 * (gram[(i, j)] + gram[(j, i)]));
    let top = symmetric_eig(&sym)?.values[0];
    Ok(top.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_diagonal() {
        let est = spectral_norm(&Matrix::identity(5)).unwrap();
        assert!((est.value - 1.0).abs() < 1e-12 && est.converged);
        let est = spectral_norm(&Matrix::diag(&[2.0, -5.0])).unwrap();
        assert!((est.value - 5.0).abs() < 1e-7, "{}", est.value);
    }

    #[test]
    fn zero_matrix_and_nan() {
        assert_eq!(spectral_norm(&Matrix::zeros(3, 2)).unwrap().value, 0.0);
        let mut m = Matrix::identity(2);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(spectral_norm(&m), Err(Error::Structural(_))));
    }

    #[test]
    fn operator_norm_agrees_with_power_iteration() {
        let m = Matrix::from_fn(5, 3, |i, j| ((i * 3 + j * 7) % 11) as f64 - 5.0);
        let exact = operator_norm(&m).unwrap();
        let est = spectral_norm(&m).unwrap().value;
        assert!(est <= exact * (1.0 + 1e-12) && (exact - est).abs() < 1e-6 * exact);
        assert!((operator_norm(&Matrix::diag(&[2.0, -5.0])).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn rectangular_rank_one() {
        // u v^T has norm |u||v|
        let m = Matrix::from_fn(3, 4, |i, j| (i as f64 + 1.0) * (j as f64 - 1.5));
        let expected = (14.0f64).sqrt() * (5.0f64).sqrt();
        assert!((spectral_norm(&m).unwrap().value - expected).abs() < 1e-9);
    }
}
