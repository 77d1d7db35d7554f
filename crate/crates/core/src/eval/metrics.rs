use rayon::prelude::*;
use serde::Serialize;

use crate::autograd::Example;
use crate::error::{Error, Result};
use crate::loss::{log_softmax, Target};
use crate::model::config::{Budget, ModelConfig};
use crate::model::layer::SpectralEngine;
use crate::model::network::model_forward;
use crate::model::params::ModelParams;
use crate::tasks::{bpb_metric, MetricKind};

/// Aggregates of one evaluation pass.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalResult {
    pub budget: usize,
    /// Mean loss over counted elements (MSE or NLL in nats).
    pub loss: f64,
    pub metric_kind: MetricKind,
    pub metric: f64,
    pub count: usize,
}

#[derive(Clone, Debug, Default)]
struct Partial {
    loss_sum: f64,
    count: usize,
    correct: usize,
    /// Per output channel: sum of targets and of squared targets.
    target_sum: Vec<f64>,
    target_sq: Vec<f64>,
    rows: usize,
}

impl Partial {
    fn merge(&mut self, o: &Partial) {
        self.loss_sum += o.loss_sum;
        self.count += o.count;
        self.correct += o.correct;
        self.rows += o.rows;
        if self.target_sum.is_empty() {
            self.target_sum = vec![0.0; o.target_sum.len()];
            self.target_sq = vec![0.0; o.target_sq.len()];
        }
        for (a, b) in self.target_sum.iter_mut().zip(&o.target_sum) {
            *a += b;
        }
        for (a, b) in self.target_sq.iter_mut().zip(&o.target_sq) {
            *a += b;
        }
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Evaluates `examples` at `budget` without touching the parameters.
pub fn evaluate(
    config: &ModelConfig,
    params: &ModelParams,
    engine: &SpectralEngine,
    examples: &[Example],
    budget: Budget,
    metric: MetricKind,
) -> Result<EvalResult> {
    let parts = examples
        .par_iter()
        .map(|ex| {
            let (out, _) = model_forward(config, params, engine, &ex.input, budget)?;
            let mut p = Partial::default();
            match &ex.target {
                Target::Labels(labels) => {
                    for (t, label) in labels.iter().enumerate() {
                        let Some(y) = *label else { continue };
                        let row = out.row(t);
                        if y >= row.len() {
                            return Err(Error::Input(format!("label {y} out of range")));
                        }
                        p.loss_sum -= log_softmax(row)[y];
                        p.count += 1;
                        p.correct += usize::from(argmax(row) == y);
                    }
                }
                Target::Values(y) => {
                    if y.shape() != out.shape() {
                        return Err(Error::Input("target shape does not match output".into()));
                    }
                    p.target_sum = y.column_sums();
                    p.target_sq = vec![0.0; y.cols()];
                    for t in 0..y.rows() {
                        for (j, (&a, &b)) in y.row(t).iter().zip(out.row(t)).enumerate() {
                            p.loss_sum += (a - b) * (a - b);
                            p.target_sq[j] += a * a;
                        }
                    }
                    p.count = y.as_slice().len();
                    p.rows = y.rows();
                }
            }
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = Partial::default();
    for p in &parts {
        total.merge(p);
    }
    if total.count == 0 {
        return Err(Error::Input("no supervised elements to evaluate".into()));
    }
    let loss = total.loss_sum / total.count as f64;
    let value = match metric {
        MetricKind::Accuracy => total.correct as f64 / total.count as f64,
        MetricKind::Bpb => bpb_metric(loss)?.bpb,
        MetricKind::R2 => {
            let n = total.rows as f64;
            let sst: f64 = total
                .target_sum
                .iter()
                .zip(&total.target_sq)
                .map(|(s, q)| q - s * s / n)
                .sum();
            if sst <= 0.0 {
                return Err(Error::Numeric("targets have zero variance".into()));
            }
            1.0 - total.loss_sum / sst
        }
    };
    Ok(EvalResult {
        budget: budget.get(),
        loss,
        metric_kind: metric,
        metric: value,
        count: total.count,
    })
}
