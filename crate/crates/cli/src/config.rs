//! Run configuration: one JSON document holding the model, training recipe,
//! task and output locations.

use std::path::{Path, PathBuf};

use anyhow::Context;
use essm::model::ModelConfig;
use essm::tasks::TaskSpec;
use essm::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const RESOLVED_CONFIG: &str = "resolved_config.json";
const DEFAULT_CACHE_DIR: &str = ".essm-cache";

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Basis and dataset cache. `ESSM_CACHE_DIR` takes precedence.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_checkpoint_dir")]
    pub checkpoint_dir: PathBuf,
    #[serde(default = "default_report_dir")]
    pub report_dir: PathBuf,
}

fn default_checkpoint_dir() -> PathBuf {
    PathBuf::from("checkpoints")
}

fn default_report_dir() -> PathBuf {
    PathBuf::from("reports")
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            cache_dir: None,
            checkpoint_dir: default_checkpoint_dir(),
            report_dir: default_report_dir(),
        }
    }
}

impl Paths {
    pub fn cache(&self) -> PathBuf {
        match std::env::var_os(essm::basis::CACHE_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.cache_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub task: TaskSpec,
    #[serde(default)]
    pub paths: Paths,
}

/// Keys of `model` that the task determines.
const TASK_OWNED: [&str; 3] = ["input", "output_dim", "head"];

impl RunConfig {
    /// Parses and validates a config. Errors name the offending key.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: RunConfig =
            serde_path_to_error::deserialize(de).map_err(|e| CliError::Config(format!("at `{}`: {}", e.path(), e.inner())))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "at `schema_version`: unsupported version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let explicit: Vec<&str> = TASK_OWNED
            .into_iter()
            .filter(|k| raw.get("model").and_then(|m| m.get(k)).is_some())
            .collect();
        let want = (cfg.task.input_kind(), cfg.task.output_dim(), cfg.task.head());
        let given = (cfg.model.input, cfg.model.output_dim, cfg.model.head);
        let clash = explicit.iter().any(|&k| match k {
            "input" => given.0 != want.0,
            "output_dim" => given.1 != want.1,
            _ => given.2 != want.2,
        });
        if clash {
            return Err(CliError::Config(format!(
                "at `model`: input/output_dim/head disagree with task `{}` (expected {:?}, {}, {:?})",
                cfg.task.kind_name(),
                want.0,
                want.1,
                want.2
            )));
        }
        cfg.model.input = want.0;
        cfg.model.output_dim = want.1;
        cfg.model.head = want.2;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Ok(Self::parse(&text).with_context(|| format!("in config {}", path.display()))?)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let wrap = |section: &str, e: essm::Error| CliError::Config(format!("in `{section}`: {e}"));
        self.model.validate().map_err(|e| wrap("model", e))?;
        self.train.validate().map_err(|e| wrap("train", e))?;
        Ok(())
    }

    /// Writes the config as resolved after defaults and overrides.
    pub fn write_resolved(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        write_json(dir, RESOLVED_CONFIG, self)
    }
}

pub fn write_json<T: Serialize + ?Sized>(dir: &Path, name: &str, value: &T) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = r#"{
        "train": {"batch_size": 2, "steps": 3},
        "task": {"kind": "copy", "n_symbols": 4, "delay": 2, "train_samples": 8, "test_samples": 2},
        "model": {"d_model": 8, "d_gate": 4, "depth": 1, "seq_len": 16, "capacity": 8, "budget_set": [2, 4, 8]}
    }"#;

    #[test]
    fn task_fills_model_io() {
        let c = RunConfig::parse(MIN).unwrap();
        assert_eq!(c.model.output_dim, 4);
        assert_eq!(c.model.input, essm::model::InputKind::Tokens { vocab: 5 });
        assert_eq!(c.schema_version, 1);
    }

    #[test]
    fn unknown_key_is_reported_with_its_path() {
        let bad = MIN.replace("\"steps\": 3", "\"steps\": 3, \"stepz\": 4");
        let e = RunConfig::parse(&bad).unwrap_err().to_string();
        assert!(e.contains("train"), "{e}");
        assert!(e.contains("stepz"), "{e}");
    }

    #[test]
    fn conflicting_output_dim_is_rejected() {
        let bad = MIN.replace("\"depth\": 1", "\"depth\": 1, \"output_dim\": 9");
        assert!(matches!(RunConfig::parse(&bad), Err(CliError::Config(_))));
        let ok = MIN.replace("\"depth\": 1", "\"depth\": 1, \"output_dim\": 4");
        assert!(RunConfig::parse(&ok).is_ok());
    }

    #[test]
    fn semantic_errors_are_config_errors() {
        let bad = MIN.replace("\"capacity\": 8", "\"capacity\": 32");
        let e = RunConfig::parse(&bad).unwrap_err();
        assert!(e.to_string().contains("model"), "{e}");
    }
}
