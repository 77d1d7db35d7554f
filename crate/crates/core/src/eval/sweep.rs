//! Budget sweeps over a fixed checkpoint and the retention summaries.

use serde::{Deserialize, Serialize};

use super::metrics::evaluate;
use crate::autograd::Example;
use crate::error::{Error, Result};
use crate::model::config::{Budget, ModelConfig};
use crate::model::layer::SpectralEngine;
use crate::model::params::ModelParams;
use crate::tasks::{MetricKind, Orientation};

pub const SWEET_SPOT_THRESHOLD: f64 = 0.98;
pub const COLLAPSE_THRESHOLD: f64 = 0.90;

pub const FLAG_NON_MONOTONE: &str = "non-monotone";
pub const FLAG_NONPOSITIVE_FULL: &str = "nonpositive-full-metric";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub budgets: Vec<usize>,
    pub metric: Vec<f64>,
    pub loss: Vec<f64>,
    pub retention: Vec<f64>,
    pub metric_kind: MetricKind,
    pub orientation: Orientation,
    pub full_metric: f64,
    pub sweet_spot: Option<usize>,
    pub collapse_boundary: Option<usize>,
    pub flags: Vec<String>,
    /// CRC32 of the parameters, identical before and after the sweep.
    pub params_fingerprint: u32,
}

/// Retention of `metric` relative to `full`, orientation-aware.
pub fn retention(metric: f64, full: f64, orientation: Orientation) -> f64 {
    match orientation {
        Orientation::HigherBetter => metric / full,
        Orientation::LowerBetter => full / metric,
    }
}

fn is_monotone(retention: &[f64]) -> bool {
    retention.windows(2).all(|w| w[0] <= w[1])
}

/// Smallest budget whose retention reaches `threshold`, and whether the
/// retention curve is non-monotone in `K`.
pub fn smallest_retaining(budgets: &[usize], retention: &[f64], threshold: f64) -> (Option<usize>, bool) {
    let k = budgets
        .iter()
        .zip(retention)
        .find(|(_, &r)| r >= threshold)
        .map(|(&k, _)| k);
    (k, !is_monotone(retention))
}

pub fn find_sweet_spot(r: &SweepReport, threshold: f64) -> (Option<usize>, bool) {
    smallest_retaining(&r.budgets, &r.retention, threshold)
}

pub fn find_collapse_boundary(r: &SweepReport, threshold: f64) -> (Option<usize>, bool) {
    smallest_retaining(&r.budgets, &r.retention, threshold)
}

impl SweepReport {
    /// Assembles a report from per-budget metrics. `budgets` must be
    /// strictly increasing and end at the full capacity.
    pub fn from_metrics(
        budgets: Vec<usize>,
        metric: Vec<f64>,
        loss: Vec<f64>,
        metric_kind: MetricKind,
        params_fingerprint: u32,
    ) -> Result<Self> {
        let orientation = metric_kind.orientation();
        let full_metric = *metric.last().ok_or_else(|| Error::config("empty sweep"))?;
        let last = metric.len() - 1;
        let retention: Vec<f64> = metric
            .iter()
            .enumerate()
            .map(|(i, &m)| if i == last { 1.0 } else { retention(m, full_metric, orientation) })
            .collect();
        let mut flags = Vec::new();
        if orientation == Orientation::HigherBetter && full_metric <= 0.0 {
            flags.push(FLAG_NONPOSITIVE_FULL.to_string());
        }
        let (sweet_spot, non_monotone) = smallest_retaining(&budgets, &retention, SWEET_SPOT_THRESHOLD);
        let (collapse_boundary, _) = smallest_retaining(&budgets, &retention, COLLAPSE_THRESHOLD);
        if non_monotone {
            flags.push(FLAG_NON_MONOTONE.to_string());
        }
        Ok(SweepReport {
            budgets,
            metric,
            loss,
            retention,
            metric_kind,
            orientation,
            full_metric,
            sweet_spot,
            collapse_boundary,
            flags,
            params_fingerprint,
        })
    }

    pub fn metric_at(&self, k: usize) -> Option<f64> {
        self.budgets.iter().position(|&b| b == k).map(|i| self.metric[i])
    }

    pub fn retention_at(&self, k: usize) -> Option<f64> {
        self.budgets.iter().position(|&b| b == k).map(|i| self.retention[i])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("budget,metric,loss,retention\n");
        for i in 0..self.budgets.len() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                self.budgets[i], self.metric[i], self.loss[i], self.retention[i]
            ));
        }
        s
    }

    /// `K<TAB>metric` rows for plotting.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("K\tmetric\n");
        for (k, m) in self.budgets.iter().zip(&self.metric) {
            s.push_str(&format!("{k}\t{m}\n"));
        }
        s
    }
}

/// Sorted, validated sweep budgets; the full capacity must be present.
pub fn validate_sweep_budgets(budgets: &[usize], capacity: usize) -> Result<Vec<Budget>> {
    let mut sorted = budgets.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.last() != Some(&capacity) {
        return Err(Error::config(format!(
            "sweep budgets must include the full capacity K̄={capacity} (retention is relative to it)"
        )));
    }
    sorted
        .into_iter()
        .map(|k| Budget::new(k, capacity).map_err(|e| Error::config(e.to_string())))
        .collect()
}

/// Evaluates one checkpoint at every budget.
pub fn budget_sweep(
    config: &ModelConfig,
    params: &ModelParams,
    engine: &SpectralEngine,
    examples: &[Example],
    budgets: &[usize],
    metric_kind: MetricKind,
) -> Result<SweepReport> {
    let budgets = validate_sweep_budgets(budgets, config.capacity)?;
    let before = params.fingerprint();
    let mut metric = Vec::with_capacity(budgets.len());
    let mut loss = Vec::with_capacity(budgets.len());
    for &b in &budgets {
        let r = evaluate(config, params, engine, examples, b, metric_kind)?;
        metric.push(r.metric);
        loss.push(r.loss);
    }
    let after = params.fingerprint();
    debug_assert_eq!(before, after);
    SweepReport::from_metrics(
        budgets.iter().map(|b| b.get()).collect(),
        metric,
        loss,
        metric_kind,
        after,
    )
}
