//! Bounded-input bounded-output audit of every spectral layer:
//! `‖y(t)‖ <= (‖D‖ + max_k σ_k^{1/4} ‖M_k‖ ‖φ_k‖_1) · max_t ‖u(t)‖`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{norm2, operator_norm, Matrix};
use crate::model::config::Budget;
use crate::model::layer::{layer_forward, LayerMode, SpectralEngine};
use crate::model::params::LayerParams;

/// Relative rounding slack on the bound (the constant is computed exactly
/// up to floating-point error).
pub const BIBO_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BiboWitness {
    pub layer: usize,
    pub trial: usize,
    pub t: usize,
    pub budget: usize,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BiboReport {
    /// Bound constant per layer.
    pub constants: Vec<f64>,
    pub trials: usize,
    pub budgets: Vec<usize>,
    pub checks: usize,
    /// Largest observed `‖y(t)‖ / (C ‖u‖_∞)`.
    pub max_ratio: f64,
    pub violations: Vec<BiboWitness>,
    pub pass: bool,
}

/// The bound constant of one layer.
pub fn bibo_constant(p: &LayerParams, engine: &SpectralEngine) -> Result<f64> {
    let basis = engine.basis();
    let quarter = basis.quarter_powers();
    let mut worst: f64 = 0.0;
    for (k, m) in p.mixing.iter().enumerate() {
        let term = quarter[k] * operator_norm(m)? * basis.filters()[k].l1_norm();
        worst = worst.max(term);
    }
    Ok(operator_norm(&p.skip)? + worst)
}

/// Random input with every row norm in `[bound/2, bound]`.
fn random_input(len: usize, d: usize, bound: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let mut u = Matrix::from_fn(len, d, |_, _| rng.sample(StandardNormal));
    for t in 0..len {
        let scale = bound * rng.gen_range(0.5..=1.0) / norm2(u.row(t)).max(f64::MIN_POSITIVE);
        u.row_mut(t).iter_mut().for_each(|v| *v *= scale);
    }
    u
}

/// Checks the bound on `trials` random inputs at every budget for every
/// layer.
pub fn bibo_audit(
    layers: &[&LayerParams],
    engine: &SpectralEngine,
    mode: LayerMode,
    budgets: &[usize],
    trials: usize,
    input_bound: f64,
    seed: u64,
) -> Result<BiboReport> {
    if !(input_bound > 0.0 && input_bound.is_finite()) {
        return Err(Error::config("input bound must be positive"));
    }
    let budgets: Vec<Budget> = budgets
        .iter()
        .map(|&k| Budget::new(k, engine.capacity()))
        .collect::<Result<_>>()?;
    let constants = layers
        .iter()
        .map(|p| bibo_constant(p, engine))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio: f64 = 0.0;
    let mut violations = Vec::new();
    let mut checks = 0;
    for (li, p) in layers.iter().enumerate() {
        let d = p.skip.cols();
        for trial in 0..trials {
            let u = random_input(engine.seq_len(), d, input_bound, &mut rng);
            let u_inf = (0..u.rows()).map(|t| norm2(u.row(t))).fold(0.0, f64::max);
            for &b in &budgets {
                let (y, _) = layer_forward(&u, p, engine, b, mode)?;
                for t in 0..y.rows() {
                    let denom = constants[li] * u_inf;
                    let n = norm2(y.row(t));
                    let ratio = if denom > 0.0 {
                        n / denom
                    } else if n == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    };
                    checks += 1;
                    max_ratio = max_ratio.max(ratio);
                    if ratio > 1.0 + BIBO_SLACK {
                        violations.push(BiboWitness {
                            layer: li,
                            trial,
                            t,
                            budget: b.get(),
                            ratio,
                        });
                    }
                }
            }
        }
    }
    Ok(BiboReport {
        constants,
        trials,
        budgets: budgets.iter().map(|b| b.get()).collect(),
        checks,
        max_ratio,
        pass: violations.is_empty(),
        violations,
    })
}
