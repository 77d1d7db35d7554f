//! Desk-scale datasets: LDS regression, delayed copy and byte LM.

pub mod bytes;
pub mod cache;
pub mod copy;
pub mod lds;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use bytes::{bpb_metric, ByteMetrics, BYTE_VOCAB};
pub use cache::{load_dataset, save_dataset, DATASET_MAGIC};
pub use copy::gen_copy;
pub use lds::{spectral_radius_estimate, SyntheticLds, TeacherSpectrum, DEFAULT_RHO_MAX};

use crate::autograd::Example;
use crate::error::{Error, Result};
use crate::loss::{LossKind, Target};
use crate::model::config::{HeadKind, InputKind};
use crate::model::network::ModelInput;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    HigherBetter,
    LowerBetter,
}

/// The headline metric of a task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    /// Coefficient of determination over the test targets.
    R2,
    Accuracy,
    /// Bits per byte.
    Bpb,
}

impl MetricKind {
    pub fn orientation(self) -> Orientation {
        match self {
            MetricKind::R2 | MetricKind::Accuracy => Orientation::HigherBetter,
            MetricKind::Bpb => Orientation::LowerBetter,
        }
    }
}

fn default_rho() -> f64 {
    DEFAULT_RHO_MAX
}

fn default_spectrum() -> TeacherSpectrum {
    TeacherSpectrum::Psd
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum TaskSpec {
    Lds {
        state_dim: usize,
        input_dim: usize,
        output_dim: usize,
        #[serde(default = "default_rho")]
        rho_max: f64,
        #[serde(default = "default_spectrum")]
        spectrum: TeacherSpectrum,
        train_samples: usize,
        test_samples: usize,
    },
    Copy {
        n_symbols: usize,
        delay: usize,
        train_samples: usize,
        test_samples: usize,
    },
    ByteLm {
        path: PathBuf,
    },
}

impl TaskSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            TaskSpec::Lds { .. } => "lds",
            TaskSpec::Copy { .. } => "copy",
            TaskSpec::ByteLm { .. } => "byte-lm",
        }
    }

    pub fn metric(&self) -> MetricKind {
        match self {
            TaskSpec::Lds { .. } => MetricKind::R2,
            TaskSpec::Copy { .. } => MetricKind::Accuracy,
            TaskSpec::ByteLm { .. } => MetricKind::Bpb,
        }
    }

    pub fn loss(&self) -> LossKind {
        match self {
            TaskSpec::Lds { .. } => LossKind::Mse,
            _ => LossKind::CrossEntropy,
        }
    }

    /// Model input kind this task feeds.
    pub fn input_kind(&self) -> InputKind {
        match self {
            TaskSpec::Lds { input_dim, .. } => InputKind::Real { dim: *input_dim },
            TaskSpec::Copy { n_symbols, .. } => InputKind::Tokens { vocab: n_symbols + 1 },
            TaskSpec::ByteLm { .. } => InputKind::Tokens { vocab: BYTE_VOCAB },
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            TaskSpec::Lds { output_dim, .. } => *output_dim,
            TaskSpec::Copy { n_symbols, .. } => *n_symbols,
            TaskSpec::ByteLm { .. } => BYTE_VOCAB,
        }
    }

    pub fn head(&self) -> HeadKind {
        HeadKind::PerStep
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub metric: MetricKind,
    pub seq_len: usize,
    pub train: Vec<Example>,
    pub test: Vec<Example>,
}

impl Dataset {
    pub fn orientation(&self) -> Orientation {
        self.metric.orientation()
    }

    pub fn loss(&self) -> LossKind {
        match self.metric {
            MetricKind::R2 => LossKind::Mse,
            _ => LossKind::CrossEntropy,
        }
    }
}

/// Builds the dataset for `spec` at sequence length `len`. Train and test
/// draws use independent streams derived from `seed`.
pub fn build_dataset(spec: &TaskSpec, len: usize, seed: u64) -> Result<Dataset> {
    let test_seed = seed ^ 0x7e57_7e57_7e57_7e57;
    let (train, test) = match spec {
        TaskSpec::Lds {
            state_dim,
            input_dim,
            output_dim,
            rho_max,
            spectrum,
            train_samples,
            test_samples,
        } => {
            let teacher = SyntheticLds::random(seed, *state_dim, *input_dim, *output_dim, *rho_max, *spectrum)?;
            let to_examples = |pairs: Vec<(crate::linalg::Sequence, crate::linalg::Sequence)>| {
                pairs
                    .into_iter()
                    .map(|(u, y)| Example {
                        input: ModelInput::Real(u),
                        target: Target::Values(y),
                    })
                    .collect::<Vec<_>>()
            };
            (
                to_examples(teacher.sample(seed.wrapping_add(1), len, *train_samples)?),
                to_examples(teacher.sample(test_seed, len, *test_samples)?),
            )
        }
        TaskSpec::Copy {
            n_symbols,
            delay,
            train_samples,
            test_samples,
        } => {
            let to_examples = |seqs: Vec<(Vec<usize>, Vec<Option<usize>>)>| {
                seqs.into_iter()
                    .map(|(x, y)| Example {
                        input: ModelInput::Tokens(x),
                        target: Target::Labels(y),
                    })
                    .collect::<Vec<_>>()
            };
            (
                to_examples(gen_copy(seed, len, *n_symbols, *delay, *train_samples)?),
                to_examples(gen_copy(test_seed, len, *n_symbols, *delay, *test_samples)?),
            )
        }
        TaskSpec::ByteLm { path } => {
            let raw = std::fs::read(path)?;
            let (train, val) = bytes::byte_windows(&raw, len)?;
            let to_examples = |w: Vec<(Vec<usize>, Vec<usize>)>| {
                w.into_iter()
                    .map(|(x, y)| Example {
                        input: ModelInput::Tokens(x),
                        target: Target::Labels(y.into_iter().map(Some).collect()),
                    })
                    .collect::<Vec<_>>()
            };
            (to_examples(train), to_examples(val))
        }
    };
    if train.is_empty() || test.is_empty() {
        return Err(Error::config("train and test splits must both be non-empty"));
    }
    Ok(Dataset {
        name: spec.kind_name().into(),
        metric: spec.metric(),
        seq_len: len,
        train,
        test,
    })
}
