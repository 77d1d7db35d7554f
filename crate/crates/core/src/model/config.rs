use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Budgets used by the deployment sweep.
pub const DEFAULT_BUDGET_SET: [usize; 9] = [2, 3, 4, 6, 8, 12, 16, 24, 32];
pub const DEFAULT_GATE_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    LayerNorm,
    RmsNorm,
}

/// How channels above the runtime budget are removed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncationMode {
    /// Softmax renormalised over the first `K` channels.
    MaskedSoftmax,
    /// Weights computed at full capacity, channels `k > K` dropped without
    /// renormalisation.
    DirectPrefix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum InputKind {
    /// Token ids looked up in an embedding table.
    Tokens { vocab: usize },
    /// Real-valued vectors mapped by a linear embedding.
    Real { dim: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    /// One readout per timestep (language modelling, regression, copy).
    PerStep,
    /// Mean over time, then one readout (sequence classification).
    MeanPool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Width `d` (input and output width of every spectral layer).
    pub d_model: usize,
    /// Hidden width of the gate MLP.
    pub d_gate: usize,
    /// Number of pre-norm residual blocks.
    pub depth: usize,
    pub seq_len: usize,
    /// Full capacity `K̄`.
    pub capacity: usize,
    pub budget_set: Vec<usize>,
    pub norm: NormKind,
    pub input: InputKind,
    pub output_dim: usize,
    pub head: HeadKind,
    /// When false the gate MLP is bypassed and all logits are zero.
    pub gate_enabled: bool,
    pub truncation: TruncationMode,
    pub gate_eps: f64,
    /// Storage precision of checkpointed parameters. Compute is always f64.
    pub precision: Precision,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 256,
            d_gate: 64,
            depth: 8,
            seq_len: 1024,
            capacity: 32,
            budget_set: DEFAULT_BUDGET_SET.to_vec(),
            norm: NormKind::LayerNorm,
            input: InputKind::Tokens { vocab: 256 },
            output_dim: 256,
            head: HeadKind::PerStep,
            gate_enabled: true,
            truncation: TruncationMode::MaskedSoftmax,
            gate_eps: DEFAULT_GATE_EPS,
            precision: Precision::F64,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_model", self.d_model),
            ("d_gate", self.d_gate),
            ("seq_len", self.seq_len),
            ("capacity", self.capacity),
            ("output_dim", self.output_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("model.{name} must be positive")));
            }
        }
        if self.capacity > self.seq_len {
            return Err(Error::config(format!(
                "model.capacity K̄={} exceeds seq_len L={}",
                self.capacity, self.seq_len
            )));
        }
        match self.input {
            InputKind::Tokens { vocab: 0 } | InputKind::Real { dim: 0 } => {
                return Err(Error::config("model.input must have a positive size"))
            }
            _ => {}
        }
        if !(self.gate_eps > 0.0 && self.gate_eps.is_finite()) {
            return Err(Error::config("model.gate_eps must be positive"));
        }
        validate_budget_set(&self.budget_set, self.capacity)
    }

    /// `K̄` is always a legal budget, even when absent from `budget_set`.
    pub fn full_budget(&self) -> Budget {
        Budget(self.capacity)
    }
}

/// Budgets must be strictly increasing, each in `2..=K̄`.
pub fn validate_budget_set(set: &[usize], capacity: usize) -> Result<()> {
    if set.is_empty() {
        return Err(Error::config("budget set is empty"));
    }
    for &k in set {
        Budget::new(k, capacity).map_err(|e| Error::config(e.to_string()))?;
    }
    if set.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("budget set must be strictly increasing"));
    }
    Ok(())
}

/// A runtime budget `K`: the number of low-index spectral channels kept.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Budget(usize);

impl Budget {
    /// `2 <= K <= K̄`. A single channel collapses the gate to a constant and
    /// is rejected.
    pub fn new(k: usize, capacity: usize) -> Result<Self> {
        if k == 1 {
            return Err(Error::Budget {
                budget: k,
                capacity,
                reason: "K=1 is excluded: the gate collapses to a single static filter",
            });
        }
        Self::allowing_single_channel(k, capacity)
    }

    /// Like [`Budget::new`] but admits `K = 1`; used to exercise the math
    /// path in isolation.
    #[doc(hidden)]
    pub fn allowing_single_channel(k: usize, capacity: usize) -> Result<Self> {
        if k == 0 || k > capacity {
            return Err(Error::Budget {
                budget: k,
                capacity,
                reason: "budget must lie in 2..=K̄",
            });
        }
        Ok(Budget(k))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

impl std::fmt::Display for Budget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "K={}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!((c.d_model, c.depth, c.capacity), (256, 8, 32));
        assert_eq!(c.budget_set, vec![2, 3, 4, 6, 8, 12, 16, 24, 32]);
    }

    #[test]
    fn budget_rules() {
        assert!(matches!(Budget::new(1, 32), Err(Error::Budget { .. })));
        assert!(Budget::new(0, 32).is_err());
        assert!(Budget::new(33, 32).is_err());
        assert_eq!(Budget::new(2, 32).unwrap().get(), 2);
        assert!(Budget::allowing_single_channel(1, 32).is_ok());
    }

    #[test]
    fn budget_set_validation() {
        assert!(validate_budget_set(&[2, 4, 32], 32).is_ok());
        assert!(validate_budget_set(&[1, 4], 32).is_err());
        assert!(validate_budget_set(&[4, 2], 32).is_err());
        assert!(validate_budget_set(&[], 32).is_err());
        assert!(validate_budget_set(&[2, 40], 32).is_err());
    }

    #[test]
    fn config_json_rejects_unknown_keys() {
        let mut v = serde_json::to_value(ModelConfig::default()).unwrap();
        v.as_object_mut()
            .unwrap()
            .insert("bogus".into(), serde_json::json!(1));
        assert!(serde_json::from_value::<ModelConfig>(v).is_err());
    }
}
