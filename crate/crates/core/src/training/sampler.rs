use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::config::{validate_budget_set, Budget};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerMode {
    /// Uniform over the model's budget set.
    UniformSet,
    /// Uniform over `2..=K̄`.
    UniformRange,
    /// Always `K̄` (budget dropout disabled).
    Full,
}

/// Draws `K_train` as a pure function of `(seed, step)`, so resumed runs
/// continue the same budget sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct BudgetSampler {
    mode: SamplerMode,
    support: Vec<usize>,
    capacity: usize,
    seed: u64,
}

impl BudgetSampler {
    pub fn new(mode: SamplerMode, budget_set: &[usize], capacity: usize, seed: u64) -> Result<Self> {
        let support = match mode {
            SamplerMode::UniformSet => {
                validate_budget_set(budget_set, capacity)?;
                budget_set.to_vec()
            }
            SamplerMode::UniformRange => {
                if capacity < 2 {
                    return Err(Error::config("range sampler needs capacity >= 2"));
                }
                (2..=capacity).collect()
            }
            SamplerMode::Full => vec![capacity],
        };
        if support.is_empty() {
            return Err(Error::config("budget sampler support is empty"));
        }
        Ok(BudgetSampler {
            mode,
            support,
            capacity,
            seed,
        })
    }

    pub fn mode(&self) -> SamplerMode {
        self.mode
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn sample(&self, step: u64) -> Budget {
        let k = if self.support.len() == 1 {
            self.support[0]
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(step);
            self.support[rng.gen_range(0..self.support.len())]
        };
        Budget::new(k, self.capacity)
            .or_else(|_| Budget::allowing_single_channel(k, self.capacity))
            .expect("support validated at construction")
    }

    /// `E[K_train]` under this sampler.
    pub fn expected_budget(&self) -> f64 {
        self.support.iter().sum::<usize>() as f64 / self.support.len() as f64
    }
}
