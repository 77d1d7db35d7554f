//! Central-difference verification of analytic gradients.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::backward::{batch_gradients, batch_loss, Example, GradientSet};
use crate::error::{Error, Result};
use crate::model::config::{Budget, ModelConfig};
use crate::model::layer::SpectralEngine;
use crate::model::params::ModelParams;

pub const DEFAULT_FD_STEP: f64 = 1e-5;
pub const DEFAULT_FD_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_FD_COORDINATES: usize = 200;
/// Denominator floor of the relative error, so coordinates whose true
/// gradient is zero compare on an absolute scale.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    pub coordinates: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: DEFAULT_FD_STEP,
            tolerance: DEFAULT_FD_TOLERANCE,
            coordinates: DEFAULT_FD_COORDINATES,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Coordinate {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub budget: usize,
    pub checked: usize,
    pub tensors_covered: usize,
    pub max_rel_err: f64,
    /// Coordinate with the largest relative error.
    pub coordinate: Option<Coordinate>,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// At least one coordinate of every non-empty tensor, the rest uniformly
/// over all coordinates, without repeats.
fn sample_coordinates(params: &ModelParams, n: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let lens: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
    let total: usize = lens.iter().sum();
    let mut picked = std::collections::BTreeSet::new();
    for (ti, &len) in lens.iter().enumerate() {
        if len > 0 {
            picked.insert((ti, rng.gen_range(0..len)));
        }
    }
    let target = n.max(picked.len()).min(total);
    let offsets: Vec<usize> = lens
        .iter()
        .scan(0, |acc, &l| {
            let o = *acc;
            *acc += l;
            Some(o)
        })
        .collect();
    while picked.len() < target {
        let flat = rng.gen_range(0..total);
        let ti = offsets.partition_point(|&o| o <= flat) - 1;
        picked.insert((ti, flat - offsets[ti]));
    }
    let mut out: Vec<_> = picked.into_iter().collect();
    out.shuffle(rng);
    out
}

/// Compares `analytic` against central differences of the batch loss.
/// `analytic` is a parameter because the negative-control tests feed it a
/// deliberately broken backward.
pub fn finite_diff_check_with(
    config: &ModelConfig,
    params: &ModelParams,
    engine: &SpectralEngine,
    batch: &[Example],
    budget: Budget,
    options: GradCheckOptions,
    analytic: impl FnOnce(&ModelParams) -> Result<GradientSet>,
) -> Result<GradCheckReport> {
    let base = analytic(params)?;
    if !base.loss.is_finite() {
        return Err(Error::Numeric(format!("loss is {}", base.loss)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let coords = sample_coordinates(params, options.coordinates, &mut rng);
    let infos = params.tensor_infos();
    let analytic_tensors: Vec<Vec<f64>> = base.grads.tensors().iter().map(|(_, t)| t.to_vec()).collect();

    let mut probe = params.clone();
    let mut worst: Option<Coordinate> = None;
    let h = options.step;
    for &(ti, idx) in &coords {
        let orig = probe.tensors_mut()[ti][idx];
        probe.tensors_mut()[ti][idx] = orig + h;
        let plus = batch_loss(config, &probe, engine, batch, budget)?;
        probe.tensors_mut()[ti][idx] = orig - h;
        let minus = batch_loss(config, &probe, engine, batch, budget)?;
        probe.tensors_mut()[ti][idx] = orig;
        if !(plus.is_finite() && minus.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite loss while perturbing {}[{idx}]",
                infos[ti].name
            )));
        }
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic_tensors[ti][idx];
        let rel_err = relative_error(a, numeric);
        if worst.as_ref().map_or(true, |w| rel_err > w.rel_err) {
            worst = Some(Coordinate {
                tensor: infos[ti].name.clone(),
                index: idx,
                analytic: a,
                numeric,
                rel_err,
            });
        }
    }
    let tensors_covered = coords
        .iter()
        .map(|c| c.0)
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    let max_rel_err = worst.as_ref().map_or(0.0, |w| w.rel_err);
    Ok(GradCheckReport {
        budget: budget.get(),
        checked: coords.len(),
        tensors_covered,
        max_rel_err,
        coordinate: worst,
        tolerance: options.tolerance,
        pass: max_rel_err <= options.tolerance,
    })
}

/// Checks the library backward against central differences.
pub fn finite_diff_check(
    config: &ModelConfig,
    params: &ModelParams,
    engine: &SpectralEngine,
    batch: &[Example],
    budget: Budget,
    options: GradCheckOptions,
) -> Result<GradCheckReport> {
    finite_diff_check_with(config, params, engine, batch, budget, options, |p| {
        batch_gradients(config, p, engine, batch, budget)
    })
}
