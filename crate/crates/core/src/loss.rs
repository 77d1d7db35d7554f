//! Task losses. Each returns the *summed* loss over counted elements, the
//! count, and the gradient of the sum with respect to the model output, so
//! batches reduce to `sum / count` exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    CrossEntropy,
    Mse,
}

/// Supervision for one sequence, aligned with the model output rows.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    /// One optional class label per output row; `None` rows carry no loss.
    Labels(Vec<Option<usize>>),
    /// Real targets with the output's shape.
    Values(Matrix),
}

impl Target {
    pub fn kind(&self) -> LossKind {
        match self {
            Target::Labels(_) => LossKind::CrossEntropy,
            Target::Values(_) => LossKind::Mse,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LossOutput {
    pub sum: f64,
    pub count: usize,
    /// `d sum / d output`.
    pub grad: Matrix,
}

/// Row-wise `log softmax`.
pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

pub fn loss_and_grad(output: &Matrix, target: &Target) -> Result<LossOutput> {
    let mut grad = Matrix::zeros(output.rows(), output.cols());
    match target {
        Target::Labels(labels) => {
            if labels.len() != output.rows() {
                return Err(Error::Input(format!(
                    "{} labels for {} output rows",
                    labels.len(),
                    output.rows()
                )));
            }
            let mut sum = 0.0;
            let mut count = 0;
            for (t, label) in labels.iter().enumerate() {
                let Some(y) = *label else { continue };
                if y >= output.cols() {
                    return Err(Error::Input(format!(
                        "label {y} at row {t} exceeds {} classes",
                        output.cols()
                    )));
                }
                let lp = log_softmax(output.row(t));
                sum -= lp[y];
                count += 1;
                for (g, l) in grad.row_mut(t).iter_mut().zip(&lp) {
                    *g = l.exp();
                }
                grad[(t, y)] -= 1.0;
            }
            Ok(LossOutput { sum, count, grad })
        }
        Target::Values(values) => {
            if values.shape() != output.shape() {
                return Err(Error::Input(format!(
                    "target shape {:?} does not match output {:?}",
                    values.shape(),
                    output.shape()
                )));
            }
            let mut sum = 0.0;
            for ((g, o), v) in grad.as_mut_slice().iter_mut().zip(output.as_slice()).zip(values.as_slice()) {
                let e = o - v;
                sum += e * e;
                *g = 2.0 * e;
            }
            Ok(LossOutput {
                sum,
                count: values.as_slice().len(),
                grad,
            })
        }
    }
}
