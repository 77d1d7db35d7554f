use std::path::Path;

use anyhow::Context;
use essm::autograd::{finite_diff_check, GradCheckOptions};
use essm::basis::{load_basis, BasisCache};
use essm::eval::{bibo_audit, budget_sweep, flop_estimate, run_ablation, training_cost_comparison, Recipe, ALL_VARIANTS};
use essm::model::network::layer_mode;
use essm::model::{Checkpoint, LayerParams, ModelConfig, ModelParams, SpectralEngine};
use essm::tasks::{build_dataset, load_dataset, save_dataset, Dataset, TaskSpec, TeacherSpectrum};
use essm::training::{TrainConfig, Trainer};
use essm::{seed, Error};
use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::config::{write_json, write_text, Paths, RunConfig};
use crate::{AblateArgs, AuditArgs, BasisArgs, CliError, FlopsArgs, GradcheckArgs, SweepArgs, TrainArgs};

pub fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(|v| v.trim())
        .filter(|v| !v.is_empty())
        .map(|v| v.parse().map_err(|_| CliError::Config(format!("invalid {what} `{v}` in `{s}`"))))
        .collect()
}

fn engine_from_cache(cache: &Path, len: usize, capacity: usize) -> anyhow::Result<SpectralEngine> {
    let (basis, hit) = BasisCache::new(cache).get_or_build(len, capacity)?;
    info!("basis L={len} K̄={capacity}: {}", if hit { "cache hit" } else { "built" });
    Ok(SpectralEngine::new(basis)?)
}

/// Builds the task dataset, reusing a cached copy for synthetic tasks.
fn dataset(cfg: &RunConfig) -> anyhow::Result<Dataset> {
    let data_seed = seed::derive(cfg.model.seed, seed::DATA);
    let len = cfg.model.seq_len;
    if matches!(cfg.task, TaskSpec::ByteLm { .. }) {
        return Ok(build_dataset(&cfg.task, len, data_seed)?);
    }
    let key = format!("{}|{len}|{data_seed}", serde_json::to_string(&cfg.task)?);
    let path = cfg.paths.cache().join(format!("dataset-{:08x}.esds", fnv1a(key.as_bytes())));
    if path.exists() {
        match load_dataset(&path) {
            Ok(d) => {
                info!("dataset cache hit: {}", path.display());
                return Ok(d);
            }
            Err(e) => log::warn!("ignoring unreadable dataset cache {}: {e}", path.display()),
        }
    }
    let d = build_dataset(&cfg.task, len, data_seed)?;
    std::fs::create_dir_all(cfg.paths.cache())?;
    save_dataset(&d, &path)?;
    Ok(d)
}

fn fnv1a(bytes: &[u8]) -> u32 {
    bytes
        .iter()
        .fold(0x811c_9dc5u32, |h, &b| (h ^ b as u32).wrapping_mul(0x0100_0193))
}

/// Writes to stdout, treating a closed pipe (`essm ... | head`) as success.
fn emit(text: &str) -> anyhow::Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    emit(&(serde_json::to_string_pretty(value)? + "\n"))
}

#[derive(Serialize)]
struct BasisSummary {
    path: String,
    cache_hit: bool,
    seq_len: usize,
    capacity: usize,
    sigma_1: f64,
    sigma_last: f64,
    decay_ratio: f64,
}

pub fn basis(a: BasisArgs) -> anyhow::Result<()> {
    if a.capacity == 0 || a.capacity > a.seq_len {
        return Err(CliError::Config(format!("--capacity {} must lie in 1..={} (--seq-len)", a.capacity, a.seq_len)).into());
    }
    let dir = a.out.unwrap_or_else(|| Paths::default().cache());
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let cache = BasisCache::new(&dir);
    let (b, hit) = cache.get_or_build(a.seq_len, a.capacity)?;
    let s = b.eigenvalues();
    print_json(&BasisSummary {
        path: cache.path_for(a.seq_len, a.capacity).display().to_string(),
        cache_hit: hit,
        seq_len: a.seq_len,
        capacity: a.capacity,
        sigma_1: s[0],
        sigma_last: s[s.len() - 1],
        decay_ratio: s[s.len() - 1] / s[0],
    })
}

pub fn train(a: TrainArgs) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(steps) = a.steps {
        cfg.train.steps = steps;
    }
    if let Some(seed) = a.seed {
        cfg.model.seed = seed;
    }
    if let Some(lr) = a.lr {
        cfg.train.lr = lr;
    }
    cfg.validate()?;
    let out = cfg.paths.checkpoint_dir.clone();
    cfg.write_resolved(&out)?;
    let data = dataset(&cfg)?;
    let engine = engine_from_cache(&cfg.paths.cache(), cfg.model.seq_len, cfg.model.capacity)?;

    let mut trainer = match &a.resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            if ckpt.config != cfg.model {
                return Err(CliError::Mismatch(format!(
                    "checkpoint {} was written with a different model config",
                    path.display()
                ))
                .into());
            }
            let t = Trainer::resume(ckpt, engine, cfg.train.clone())?;
            info!("resuming at step {}", t.step);
            t
        }
        None => Trainer::from_config(cfg.model.clone(), cfg.train.clone(), engine)?,
    };

    let log_path = out.join("train_log.jsonl");
    let mut log = String::new();
    if a.resume.is_some() {
        log = std::fs::read_to_string(&log_path).unwrap_or_default();
    }
    let summary = trainer.run(
        &data.train,
        |rec| {
            log.push_str(&serde_json::to_string(rec)?);
            log.push('\n');
            std::fs::write(&log_path, &log)?;
            info!("step {} loss {:.6} lr {:.2e}", rec.step, rec.loss, rec.lr);
            Ok(())
        },
        |t| {
            let path = out.join(format!("ckpt-{:06}.essm", t.step));
            t.checkpoint().save(&path)?;
            info!("checkpoint {}", path.display());
            Ok(())
        },
    );
    // the log is written even when the run fails partway
    if !log.is_empty() {
        std::fs::write(&log_path, &log)?;
    }
    let summary = summary?;
    let final_path = out.join("final.essm");
    trainer.checkpoint().save(&final_path)?;
    write_json(&out, "train_summary.json", &summary)?;
    print_json(&summary)
}

/// The model config the task expects must agree with the checkpoint's.
fn check_task_fits(cfg: &RunConfig, model: &ModelConfig) -> Result<(), CliError> {
    let want = (cfg.model.seq_len, cfg.model.input, cfg.model.output_dim, cfg.model.head);
    let got = (model.seq_len, model.input, model.output_dim, model.head);
    if want != got {
        return Err(CliError::Mismatch(format!(
            "checkpoint expects (L, input, output_dim, head) = {got:?}, config task gives {want:?}"
        )));
    }
    Ok(())
}

pub fn sweep(a: SweepArgs) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    let budgets: Vec<usize> = parse_list(&a.budgets, "budget")?;
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    check_task_fits(&cfg, &ckpt.config)?;
    // evaluate on the test split the checkpoint was trained alongside
    cfg.model.seed = ckpt.config.seed;
    let engine = match &a.basis {
        Some(path) => SpectralEngine::new(load_basis(path, None)?)?,
        None => engine_from_cache(&cfg.paths.cache(), ckpt.config.seq_len, ckpt.config.capacity)?,
    };
    ckpt.check_engine(&engine)?;
    let data = dataset(&cfg)?;
    let report = budget_sweep(&ckpt.config, &ckpt.params, &engine, &data.test, &budgets, data.metric)?;
    let out = a.out.unwrap_or_else(|| cfg.paths.report_dir.clone());
    cfg.write_resolved(&out)?;
    write_text(&out, "sweep.json", &(report.to_json()? + "\n"))?;
    write_text(&out, "sweep.csv", &report.to_csv())?;
    write_text(&out, "sweep.tsv", &report.to_tsv())?;
    emit(&report.to_tsv())
}

fn tiny_gradcheck_config() -> RunConfig {
    RunConfig {
        schema_version: crate::config::SCHEMA_VERSION,
        model: ModelConfig {
            d_model: 4,
            d_gate: 4,
            depth: 2,
            seq_len: 8,
            capacity: 6,
            budget_set: vec![2, 3, 6],
            input: essm::model::InputKind::Real { dim: 3 },
            output_dim: 2,
            ..ModelConfig::default()
        },
        train: TrainConfig {
            batch_size: 2,
            steps: 1,
            ..TrainConfig::default()
        },
        task: TaskSpec::Lds {
            state_dim: 4,
            input_dim: 3,
            output_dim: 2,
            rho_max: 0.9,
            spectrum: TeacherSpectrum::Psd,
            train_samples: 2,
            test_samples: 1,
        },
        paths: Paths::default(),
    }
}

#[derive(Serialize)]
struct GradcheckOutput {
    pass: bool,
    reports: Vec<essm::autograd::GradCheckReport>,
}

pub fn gradcheck(a: GradcheckArgs) -> anyhow::Result<()> {
    let cfg = match &a.config {
        Some(path) => RunConfig::load(path)?,
        None => tiny_gradcheck_config(),
    };
    let budgets: Vec<usize> = match &a.budgets {
        Some(s) => parse_list(s, "budget")?,
        None => vec![2, cfg.model.capacity],
    };
    let engine = SpectralEngine::new(essm::basis::SpectralBasis::build(cfg.model.seq_len, cfg.model.capacity)?)?;
    let data = build_dataset(&cfg.task, cfg.model.seq_len, seed::derive(a.seed, seed::DATA))?;
    let batch: Vec<_> = data.train.iter().take(2).cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(a.seed, seed::INIT));
    let mut params = ModelParams::init(&cfg.model, &mut rng);
    // move off the initialisation so every term is exercised
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v += 0.2 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let opts = GradCheckOptions {
        coordinates: a.coordinates,
        seed: a.seed,
        ..GradCheckOptions::default()
    };
    let mut reports = Vec::new();
    for k in budgets {
        let budget = essm::model::Budget::new(k, cfg.model.capacity).map_err(|e| CliError::Config(e.to_string()))?;
        let r = finite_diff_check(&cfg.model, &params, &engine, &batch, budget, opts)?;
        emit(&format!(
            "{} K={k}: max relative error {:.2e} over {} coordinates (tolerance {:.0e})\n",
            if r.pass { "PASS" } else { "FAIL" },
            r.max_rel_err,
            r.checked,
            r.tolerance
        ))?;
        reports.push(r);
    }
    let pass = reports.iter().all(|r| r.pass);
    write_json(&a.out, "gradcheck.json", &GradcheckOutput { pass, reports })?;
    cfg.write_resolved(&a.out)?;
    if !pass {
        return Err(CliError::Failed("gradient check exceeded tolerance".into()).into());
    }
    Ok(())
}

pub fn audit(a: AuditArgs) -> anyhow::Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let budgets: Vec<usize> = parse_list(&a.budgets, "budget")?;
    let cache = a.cache_dir.clone().unwrap_or_else(|| Paths::default().cache());
    let engine = engine_from_cache(&cache, ckpt.config.seq_len, ckpt.config.capacity)?;
    ckpt.check_engine(&engine)?;
    let layers: Vec<&LayerParams> = ckpt.params.blocks.iter().map(|b| &b.layer).collect();
    let report = bibo_audit(&layers, &engine, layer_mode(&ckpt.config), &budgets, a.trials, a.bound, a.seed)?;
    write_json(&a.out, "audit.json", &report)?;
    write_json(&a.out, crate::config::RESOLVED_CONFIG, &ckpt.config)?;
    emit(&format!(
        "{}: {} violations in {} checks, max ratio {:.4}\n",
        if report.pass { "PASS" } else { "FAIL" },
        report.violations.len(),
        report.checks,
        report.max_ratio
    ))?;
    if !report.pass {
        return Err(Error::Audit(format!("{} BIBO violations", report.violations.len())).into());
    }
    Ok(())
}

pub fn ablate(a: AblateArgs) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(steps) = a.steps {
        cfg.train.steps = steps;
        cfg.validate()?;
    }
    let seeds: Vec<u64> = parse_list(&a.seeds, "seed")?;
    if seeds.is_empty() {
        return Err(CliError::Config("no seeds given".into()).into());
    }
    let budgets: Vec<usize> = parse_list(&a.budgets, "budget")?;
    let data = dataset(&cfg)?;
    let engine = engine_from_cache(&cfg.paths.cache(), cfg.model.seq_len, cfg.model.capacity)?;
    let recipe = Recipe {
        model: cfg.model.clone(),
        dropout_sampler: cfg.train.sampler,
        train: cfg.train.clone(),
        budgets,
    };
    let report = run_ablation(&recipe, &ALL_VARIANTS, &seeds, &engine, &data)?;
    let out = a.out.unwrap_or_else(|| cfg.paths.report_dir.clone());
    cfg.write_resolved(&out)?;
    write_json(&out, "ablation.json", &report)?;
    let table = report.to_table();
    write_text(&out, "ablation.tsv", &table)?;
    emit(&table)
}

#[derive(Serialize)]
struct FlopsOutput {
    config: ModelConfig,
    estimates: Vec<essm::eval::FlopEstimate>,
    training: essm::eval::TrainingCostComparison,
}

pub fn flops(a: FlopsArgs) -> anyhow::Result<()> {
    let mut model = match &a.config {
        Some(path) => RunConfig::load(path)?.model,
        None => ModelConfig::default(),
    };
    macro_rules! apply {
        ($($field:ident),*) => { $(if let Some(v) = a.$field { model.$field = v; })* };
    }
    apply!(seq_len, d_model, d_gate, depth, capacity);
    let budgets: Vec<usize> = parse_list(&a.budgets, "budget")?;
    let budgets: Vec<usize> = essm::eval::validate_sweep_budgets(&budgets, model.capacity)?
        .iter()
        .map(|b| b.get())
        .collect();
    let estimates = budgets.iter().map(|&k| flop_estimate(&model, k, a.batch)).collect();
    let training = training_cost_comparison(&model, &budgets);
    let out = FlopsOutput {
        config: model,
        estimates,
        training,
    };
    if let Some(dir) = &a.out {
        write_json(dir, "flops.json", &out)?;
        write_json(dir, crate::config::RESOLVED_CONFIG, &out.config)?;
    }
    print_json(&out)
}
