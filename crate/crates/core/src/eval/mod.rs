//! Budgeted evaluation: sweeps, retention summaries, stability audits, cost
//! estimates and the ablation driver.

pub mod ablation;
pub mod audit;
pub mod flops;
pub mod metrics;
pub mod sweep;

pub use ablation::{check_matched, run_ablation, AblationReport, Recipe, Variant, VariantResult, VariantSpec, ALL_VARIANTS};
pub use audit::{bibo_audit, bibo_constant, BiboReport, BiboWitness};
pub use flops::{flop_estimate, training_cost_comparison, FlopEstimate, TrainingCostComparison};
pub use metrics::{evaluate, EvalResult};
pub use sweep::{
    budget_sweep, find_collapse_boundary, find_sweet_spot, retention, validate_sweep_budgets, SweepReport,
    COLLAPSE_THRESHOLD, SWEET_SPOT_THRESHOLD,
};
