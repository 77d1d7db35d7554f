//! Nominal per-layer cost model
//! `B (K+1) d L log2 L + B L (K d² + d² + d_g d + K̄ d_g + K)`
//! with every term's constant taken as one. The `(K+1)` counts one forward
//! transform of the input plus one inverse per active channel; the second
//! group is mixing, skip, the first gate layer, the logit layer and the
//! softmax.

use serde::Serialize;

use crate::model::config::ModelConfig;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlopEstimate {
    pub budget: usize,
    pub batch: usize,
    /// Terms proportional to `K`.
    pub spectral: f64,
    /// Budget-independent terms.
    pub fixed: f64,
    pub per_layer: f64,
    pub total: f64,
}

pub fn flop_estimate(config: &ModelConfig, budget: usize, batch: usize) -> FlopEstimate {
    let b = batch as f64;
    let k = budget as f64;
    let d = config.d_model as f64;
    let l = config.seq_len as f64;
    let dg = config.d_gate as f64;
    let cap = config.capacity as f64;
    let log_l = l.log2();
    let spectral = b * k * d * l * log_l + b * l * (k * d * d + k);
    let fixed = b * d * l * log_l + b * l * (d * d + dg * d + cap * dg);
    let per_layer = spectral + fixed;
    FlopEstimate {
        budget,
        batch,
        spectral,
        fixed,
        per_layer,
        total: per_layer * config.depth as f64,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainingCostComparison {
    pub budgets: Vec<usize>,
    pub expected_budget: f64,
    /// Per-step spectral work of training one model per budget.
    pub retrain_spectral: f64,
    /// Expected per-step spectral work of one budget-dropout model.
    pub dropout_spectral: f64,
    pub spectral_ratio: f64,
}

/// Cost of training one model per budget versus one model with budget
/// sampling uniform over `budgets`.
pub fn training_cost_comparison(config: &ModelConfig, budgets: &[usize]) -> TrainingCostComparison {
    let n = budgets.len() as f64;
    let per: Vec<FlopEstimate> = budgets.iter().map(|&k| flop_estimate(config, k, 1)).collect();
    let sum_spectral: f64 = per.iter().map(|e| e.spectral).sum();
    let expected_budget = budgets.iter().sum::<usize>() as f64 / n;
    let dropout_spectral = flop_estimate(config, 1, 1).spectral * expected_budget;
    TrainingCostComparison {
        budgets: budgets.to_vec(),
        expected_budget,
        retrain_spectral: sum_spectral,
        dropout_spectral,
        spectral_ratio: sum_spectral / dropout_spectral,
    }
}
