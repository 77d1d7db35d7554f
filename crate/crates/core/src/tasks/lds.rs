//! Linear dynamical system teacher `x_t = A x_{t-1} + B u_t`,
//! `y_t = C x_t + D u_t`, `x_{-1} = 0`, so the impulse response is
//! `G(0) = CB + D`, `G(τ) = C A^τ B` for `τ >= 1`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, Matrix, Sequence};

pub const DEFAULT_RHO_MAX: f64 = 0.95;
/// Squarings used by the spectral-radius estimate (`‖A^(2^j)‖^(1/2^j)`).
const RADIUS_SQUARINGS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TeacherSpectrum {
    /// Symmetric positive semidefinite `A`: real eigenvalues in `[0, ρ_max]`.
    Psd,
    /// Dense Gaussian `A` (complex and negative eigenvalues).
    General,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticLds {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
    pub spectral_radius: f64,
    pub seed: u64,
}

/// Upper estimate of the spectral radius by Gelfand's formula with repeated
/// squaring. Never below the true radius (up to rounding), converging as
/// the power grows.
pub fn spectral_radius_estimate(a: &Matrix) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::structural("spectral radius of a non-square matrix"));
    }
    let mut b = a.clone();
    let mut log_scale = 0.0;
    for _ in 0..RADIUS_SQUARINGS {
        let s = b.max_abs();
        if s == 0.0 {
            return Ok(0.0);
        }
        b.scale(1.0 / s);
        log_scale += s.ln();
        b = b.matmul(&b);
        log_scale *= 2.0;
    }
    let n = spectral_norm(&b)?.value;
    if n == 0.0 {
        return Ok(0.0);
    }
    let power = (1u64 << RADIUS_SQUARINGS) as f64;
    Ok(((n.ln() + log_scale) / power).exp())
}

fn gaussian(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z * std
    })
}

impl SyntheticLds {
    pub fn random(
        seed: u64,
        state_dim: usize,
        input_dim: usize,
        output_dim: usize,
        rho_max: f64,
        spectrum: TeacherSpectrum,
    ) -> Result<Self> {
        if !(rho_max > 0.0 && rho_max < 1.0) {
            return Err(Error::config(format!("rho_max={rho_max} must lie in (0, 1)")));
        }
        if state_dim == 0 || input_dim == 0 || output_dim == 0 {
            return Err(Error::config("LDS dimensions must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = gaussian(state_dim, state_dim, (1.0 / state_dim as f64).sqrt(), &mut rng);
        let mut a = match spectrum {
            TeacherSpectrum::Psd => raw.matmul_t(&raw),
            TeacherSpectrum::General => raw,
        };
        let radius = spectral_radius_estimate(&a)?;
        if radius > 0.0 {
            a.scale(rho_max / radius);
        }
        let b = gaussian(state_dim, input_dim, (1.0 / input_dim as f64).sqrt(), &mut rng);
        let c = gaussian(output_dim, state_dim, (1.0 / state_dim as f64).sqrt(), &mut rng);
        let d = gaussian(output_dim, input_dim, (1.0 / input_dim as f64).sqrt(), &mut rng);
        let spectral_radius = spectral_radius_estimate(&a)?;
        Ok(SyntheticLds {
            a,
            b,
            c,
            d,
            spectral_radius,
            seed,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.rows()
    }

    /// Recurrent unroll over an `L × d_in` input.
    pub fn simulate(&self, u: &Sequence) -> Result<Sequence> {
        if u.cols() != self.input_dim() {
            return Err(Error::structural(format!(
                "teacher expects {} input channels, got {}",
                self.input_dim(),
                u.cols()
            )));
        }
        let mut x = vec![0.0; self.state_dim()];
        let mut y = Matrix::zeros(u.rows(), self.output_dim());
        for t in 0..u.rows() {
            let ut = u.row(t);
            let mut next = self.a.matvec(&x);
            for (n, b) in next.iter_mut().zip(self.b.matvec(ut)) {
                *n += b;
            }
            x = next;
            let out = y.row_mut(t);
            for ((o, c), d) in out.iter_mut().zip(self.c.matvec(&x)).zip(self.d.matvec(ut)) {
                *o = c + d;
            }
        }
        Ok(y)
    }

    /// `G(τ)` for `τ < len` as `d_out × d_in` matrices.
    pub fn impulse_response(&self, len: usize) -> Vec<Matrix> {
        let mut out = Vec::with_capacity(len);
        let mut ab = self.b.clone();
        for tau in 0..len {
            let mut g = self.c.matmul(&ab);
            if tau == 0 {
                g.add_assign(&self.d);
            }
            out.push(g);
            ab = self.a.matmul(&ab);
        }
        out
    }

    /// `n` input/target pairs with i.i.d. standard normal inputs.
    pub fn sample(&self, seed: u64, len: usize, n: usize) -> Result<Vec<(Sequence, Sequence)>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let u = gaussian(len, self.input_dim(), 1.0, &mut rng);
                let y = self.simulate(&u)?;
                Ok((u, y))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_teacher_hand_unroll() {
        let lds = SyntheticLds {
            a: Matrix::diag(&[0.9]),
            b: Matrix::identity(1),
            c: Matrix::identity(1),
            d: Matrix::zeros(1, 1),
            spectral_radius: 0.9,
            seed: 0,
        };
        let u = Matrix::from_vec(4, 1, vec![1.0, 2.0, 0.0, -1.0]).unwrap();
        let y = lds.simulate(&u).unwrap();
        let expected = [1.0, 0.9 + 2.0, 0.81 + 1.8, 0.729 + 1.62 - 1.0];
        for (a, b) in y.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn nilpotent_teacher_has_one_tap() {
        let mut lds = SyntheticLds::random(3, 4, 2, 2, 0.5, TeacherSpectrum::General).unwrap();
        lds.a = Matrix::zeros(4, 4);
        let g = lds.impulse_response(3);
        let mut g0 = lds.c.matmul(&lds.b);
        g0.add_assign(&lds.d);
        assert_eq!(g[0], g0);
        assert!(g[1].max_abs() == 0.0 && g[2].max_abs() == 0.0);
    }

    #[test]
    fn radius_is_rescaled() {
        for spectrum in [TeacherSpectrum::Psd, TeacherSpectrum::General] {
            let lds = SyntheticLds::random(9, 12, 3, 2, 0.95, spectrum).unwrap();
            assert!(lds.spectral_radius <= 0.95 + 1e-9, "{}", lds.spectral_radius);
            assert!(lds.spectral_radius > 0.9);
        }
        assert!(SyntheticLds::random(1, 3, 1, 1, 1.0, TeacherSpectrum::Psd).is_err());
    }

    #[test]
    fn radius_of_diagonal() {
        let r = spectral_radius_estimate(&Matrix::diag(&[0.3, -0.7, 0.5])).unwrap();
        assert!((r - 0.7).abs() < 1e-12);
    }
}
