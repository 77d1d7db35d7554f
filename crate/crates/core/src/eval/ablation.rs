//! Variants that differ only in gating, budget dropout and truncation,
//! trained under one recipe and swept over the same budgets.

use serde::{Deserialize, Serialize};

use super::sweep::{budget_sweep, SweepReport};
use crate::error::{Error, Result};
use crate::model::config::{ModelConfig, TruncationMode};
use crate::model::layer::SpectralEngine;
use crate::tasks::Dataset;
use crate::training::{SamplerMode, TrainConfig, Trainer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    EsSsm,
    BaseSpectral,
    GateOnly,
    DropoutOnly,
    /// Direct-prefix truncation of the plain spectral model. Without the
    /// autoregressive terms this coincides with [`Variant::BaseSpectral`],
    /// so its row reuses that run.
    ArStu,
}

pub const ALL_VARIANTS: [Variant; 5] = [
    Variant::EsSsm,
    Variant::BaseSpectral,
    Variant::GateOnly,
    Variant::DropoutOnly,
    Variant::ArStu,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct VariantSpec {
    pub gate_enabled: bool,
    pub budget_dropout_enabled: bool,
    pub truncation: TruncationMode,
}

impl Variant {
    pub fn spec(self) -> VariantSpec {
        let (gate, dropout, truncation) = match self {
            Variant::EsSsm => (true, true, TruncationMode::MaskedSoftmax),
            Variant::BaseSpectral | Variant::ArStu => (false, false, TruncationMode::DirectPrefix),
            Variant::GateOnly => (true, false, TruncationMode::MaskedSoftmax),
            Variant::DropoutOnly => (false, true, TruncationMode::DirectPrefix),
        };
        VariantSpec {
            gate_enabled: gate,
            budget_dropout_enabled: dropout,
            truncation,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::EsSsm => "es-ssm",
            Variant::BaseSpectral => "base-spectral",
            Variant::GateOnly => "gate-only",
            Variant::DropoutOnly => "dropout-only",
            Variant::ArStu => "ar-stu",
        }
    }

    /// The variant whose trained run this one shares, if any.
    pub fn alias_of(self) -> Option<Variant> {
        (self == Variant::ArStu).then_some(Variant::BaseSpectral)
    }
}

/// Shared training recipe. Variant switches are applied on top of it.
#[derive(Clone, Debug, PartialEq)]
pub struct Recipe {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Sampler used by variants with budget dropout.
    pub dropout_sampler: SamplerMode,
    pub budgets: Vec<usize>,
}

impl Recipe {
    pub fn for_variant(&self, v: Variant) -> (ModelConfig, TrainConfig) {
        let s = v.spec();
        let mut model = self.model.clone();
        model.gate_enabled = s.gate_enabled;
        model.truncation = s.truncation;
        let mut train = self.train.clone();
        train.sampler = if s.budget_dropout_enabled {
            self.dropout_sampler
        } else {
            SamplerMode::Full
        };
        (model, train)
    }
}

/// Recipes for different variants must agree once variant switches are
/// normalised away.
pub fn check_matched(recipes: &[(Variant, ModelConfig, TrainConfig)]) -> Result<()> {
    let strip = |m: &ModelConfig, t: &TrainConfig| {
        let mut m = m.clone();
        m.gate_enabled = true;
        m.truncation = TruncationMode::MaskedSoftmax;
        let mut t = t.clone();
        t.sampler = SamplerMode::Full;
        (m, t)
    };
    if let Some((_, m0, t0)) = recipes.first() {
        let base = strip(m0, t0);
        for (v, m, t) in &recipes[1..] {
            if strip(m, t) != base {
                return Err(Error::config(format!(
                    "variant {} was trained with a different recipe",
                    v.name()
                )));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariantResult {
    pub variant: Variant,
    pub spec: VariantSpec,
    pub alias_of: Option<Variant>,
    pub seed: u64,
    pub final_train_loss: f64,
    pub report: SweepReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationReport {
    pub budgets: Vec<usize>,
    pub rows: Vec<VariantResult>,
}

impl AblationReport {
    pub fn row(&self, v: Variant, seed: u64) -> Option<&VariantResult> {
        self.rows.iter().find(|r| r.variant == v && r.seed == seed)
    }

    /// Tab-separated comparison table: one row per (variant, seed), one
    /// metric column per budget.
    pub fn to_table(&self) -> String {
        let mut s = String::from("variant\tseed");
        for k in &self.budgets {
            s.push_str(&format!("\tK={k}"));
        }
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!("{}\t{}", r.variant.name(), r.seed));
            for m in &r.report.metric {
                s.push_str(&format!("\t{m:.6}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Trains each variant once per seed and sweeps it on the test split.
pub fn run_ablation(
    recipe: &Recipe,
    variants: &[Variant],
    seeds: &[u64],
    engine: &SpectralEngine,
    data: &Dataset,
) -> Result<AblationReport> {
    let mut rows: Vec<VariantResult> = Vec::new();
    for &seed in seeds {
        let configs: Vec<_> = variants
            .iter()
            .map(|&v| {
                let (mut m, t) = recipe.for_variant(v);
                m.seed = seed;
                (v, m, t)
            })
            .collect();
        check_matched(&configs)?;
        for (v, model, train) in configs {
            if let Some(src) = v.alias_of() {
                if let Some(r) = rows.iter().find(|r| r.variant == src && r.seed == seed).cloned() {
                    rows.push(VariantResult {
                        variant: v,
                        spec: v.spec(),
                        alias_of: Some(src),
                        ..r
                    });
                    continue;
                }
            }
            log::info!("training variant {} (seed {seed})", v.name());
            let mut trainer = Trainer::from_config(model, train, engine.clone())?;
            let summary = trainer.run(&data.train, |_| Ok(()), |_| Ok(()))?;
            let m = &trainer.model;
            let report = budget_sweep(&m.config, &m.params, &m.engine, &data.test, &recipe.budgets, data.metric)?;
            rows.push(VariantResult {
                variant: v,
                spec: v.spec(),
                alias_of: v.alias_of(),
                seed,
                final_train_loss: summary.final_loss,
                report,
            });
        }
    }
    Ok(AblationReport {
        budgets: recipe.budgets.clone(),
        rows,
    })
}
