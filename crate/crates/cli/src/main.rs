//! `essm`: build bases, train, sweep budgets, and run the numerical audits.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub const DEFAULT_SWEEP_BUDGETS: &str = "2,3,4,6,8,12,16,24,32";

/// Failures raised by the driver itself, on top of library errors.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("artifact mismatch: {0}")]
    Mismatch(String),
    /// A check ran to completion and did not pass.
    #[error("check failed: {0}")]
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Mismatch(_) => 3,
            CliError::Failed(_) => 5,
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return e.exit_code();
        }
        if let Some(e) = cause.downcast_ref::<essm::Error>() {
            return e.exit_code() as u8;
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return 2;
        }
    }
    1
}

#[derive(Debug, Parser)]
#[command(name = "essm", version, about = "Spectral state space layers with a runtime channel budget")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build (or fetch from cache) the spectral basis for (L, K̄).
    Basis(BasisArgs),
    /// Train a model from a run config.
    Train(TrainArgs),
    /// Evaluate a checkpoint across budgets.
    Sweep(SweepArgs),
    /// Finite-difference check of the analytic gradients.
    Gradcheck(GradcheckArgs),
    /// Bounded-input bounded-output audit of a checkpoint.
    Audit(AuditArgs),
    /// Train and sweep every ablation variant under one recipe.
    Ablate(AblateArgs),
    /// Nominal FLOP counts per budget.
    Flops(FlopsArgs),
}

#[derive(Debug, Args)]
pub struct BasisArgs {
    #[arg(long)]
    pub seq_len: usize,
    #[arg(long, default_value_t = essm::basis::DEFAULT_CAPACITY)]
    pub capacity: usize,
    /// Cache directory (default: $ESSM_CACHE_DIR, then .essm-cache).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `train.steps`.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Overrides `model.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `train.lr`.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Run config naming the task to evaluate on.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = DEFAULT_SWEEP_BUDGETS)]
    pub budgets: String,
    /// A basis file to use instead of the cache.
    #[arg(long)]
    pub basis: Option<PathBuf>,
    /// Output directory (default: `paths.report_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Run config; a tiny built-in model is used when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Budgets to check (default: 2 and K̄).
    #[arg(long)]
    pub budgets: Option<String>,
    #[arg(long, default_value_t = essm::autograd::gradcheck::DEFAULT_FD_COORDINATES)]
    pub coordinates: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "reports")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = DEFAULT_SWEEP_BUDGETS)]
    pub budgets: String,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Largest per-timestep input norm of the random inputs.
    #[arg(long, default_value_t = 1.0)]
    pub bound: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, default_value = "reports")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "0,1,2")]
    pub seeds: String,
    #[arg(long, default_value = DEFAULT_SWEEP_BUDGETS)]
    pub budgets: String,
    /// Overrides `train.steps`.
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FlopsArgs {
    /// Take the model shape from a run config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seq_len: Option<usize>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub d_gate: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub capacity: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    #[arg(long, default_value = DEFAULT_SWEEP_BUDGETS)]
    pub budgets: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Basis(a) => commands::basis(a),
        Command::Train(a) => commands::train(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Audit(a) => commands::audit(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Flops(a) => commands::flops(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
