//! Experiment configuration: a single JSON document with strict key checking.
//! Command-line `--set key.path=value` assignments override config keys before
//! validation.

use crate::error::{CliError, CliResult};
use ltrj_core::data::{parse_idx, split_train_val, synth_blobs, Dataset};
use ltrj_core::nn::Architecture;
use ltrj_core::optim::{LrSchedule, SGDConfig};
use ltrj_core::transfer::{LambdaSchedule, TransferMethod};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const DATA_DIR_ENV: &str = "LTRJ_DATA_DIR";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// MNIST-style IDX files under `dir` (or `$LTRJ_DATA_DIR` when absent).
    Mnist {
        #[serde(default)]
        dir: Option<PathBuf>,
        #[serde(default = "default_images_name")]
        images: String,
        #[serde(default = "default_labels_name")]
        labels: String,
        #[serde(default)]
        split_seed: u64,
    },
    /// Synthetic Gaussian clusters, generated in memory.
    Blobs {
        classes: usize,
        per_class: usize,
        dim: usize,
        spread: f64,
        seed: u64,
        #[serde(default)]
        split_seed: u64,
    },
}

fn default_images_name() -> String {
    "train-images-idx3-ubyte".into()
}

fn default_labels_name() -> String {
    "train-labels-idx1-ubyte".into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferSpec {
    pub method: TransferMethod,
    /// Trajectory length T for the linear source trajectory.
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_schedule")]
    pub schedule: LambdaSchedule,
    /// "linear" interpolates the source endpoints; "actual" uses the recorded
    /// checkpoints as-is.
    #[serde(default = "default_source_kind")]
    pub source_trajectory: SourceKind,
    #[serde(default = "default_match_batch")]
    pub match_batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
    #[serde(default)]
    pub layer_order_seed: u64,
    #[serde(default = "default_eval_batch")]
    pub eval_batch: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Linear,
    Actual,
}

fn default_steps() -> usize {
    10
}

fn default_schedule() -> LambdaSchedule {
    LambdaSchedule::Cosine
}

fn default_source_kind() -> SourceKind {
    SourceKind::Linear
}

fn default_match_batch() -> usize {
    128
}

fn default_max_sweeps() -> usize {
    100
}

fn default_eval_batch() -> usize {
    512
}

impl Default for TransferSpec {
    fn default() -> Self {
        TransferSpec {
            method: TransferMethod::Gmt,
            steps: default_steps(),
            schedule: default_schedule(),
            source_trajectory: default_source_kind(),
            match_batch_size: default_match_batch(),
            seed: 0,
            max_sweeps: default_max_sweeps(),
            layer_order_seed: 0,
            eval_batch: default_eval_batch(),
        }
    }
}

fn default_sgd() -> SGDConfig {
    // MNIST 2-MLP defaults: E=10, B=128, lr=0.01, momentum=0.9, no decay.
    SGDConfig {
        lr: 0.01,
        momentum: 0.9,
        weight_decay: 0.0,
        epochs: 10,
        batch_size: 128,
        schedule: LrSchedule::Constant,
        seed: 0,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    /// Layer dimensions (d₀,…,d_L).
    pub arch: Vec<usize>,
    #[serde(default = "default_sgd")]
    pub sgd: SGDConfig,
    #[serde(default)]
    pub transfer: TransferSpec,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn architecture(&self) -> CliResult<Architecture> {
        Ok(Architecture::new(self.arch.clone())?)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.architecture()?;
        self.sgd.validate()?;
        if self.transfer.steps == 0 {
            return Err(CliError::usage("transfer.steps must be >= 1"));
        }
        if self.transfer.match_batch_size == 0 || self.transfer.eval_batch == 0 {
            return Err(CliError::usage("batch sizes must be >= 1"));
        }
        match &self.dataset {
            DatasetSpec::Blobs {
                classes,
                per_class,
                dim,
                ..
            } => {
                if *classes == 0 || *per_class == 0 || *dim == 0 {
                    return Err(CliError::usage("blobs dims must be >= 1"));
                }
            }
            DatasetSpec::Mnist { .. } => {}
        }
        Ok(())
    }

    /// Load the configured dataset and apply the deterministic 9:1 split.
    pub fn load_split(&self) -> CliResult<(Dataset<f32>, Dataset<f32>)> {
        let (ds, split_seed) = self.load_full()?;
        Ok(split_train_val(&ds, split_seed)?)
    }

    /// Load the full configured dataset plus its split seed.
    pub fn load_full(&self) -> CliResult<(Dataset<f32>, u64)> {
        match &self.dataset {
            DatasetSpec::Blobs {
                classes,
                per_class,
                dim,
                spread,
                seed,
                split_seed,
            } => Ok((
                synth_blobs(*classes, *per_class, *dim, *spread, *seed)?,
                *split_seed,
            )),
            DatasetSpec::Mnist {
                dir,
                images,
                labels,
                split_seed,
            } => {
                let base = match dir {
                    Some(d) => d.clone(),
                    None => std::env::var_os(DATA_DIR_ENV)
                        .map(PathBuf::from)
                        .ok_or_else(|| {
                            CliError::usage(format!(
                                "dataset.dir not set and ${DATA_DIR_ENV} is undefined"
                            ))
                        })?,
                };
                let images_path = base.join(images);
                let labels_path = base.join(labels);
                let ibytes = std::fs::read(&images_path).map_err(|e| {
                    CliError::usage(format!("reading {}: {e}", images_path.display()))
                })?;
                let lbytes = std::fs::read(&labels_path).map_err(|e| {
                    CliError::usage(format!("reading {}: {e}", labels_path.display()))
                })?;
                Ok((parse_idx(&ibytes, &lbytes)?, *split_seed))
            }
        }
    }
}

/// Parse the config file, apply `--set key.path=value` overrides, then
/// deserialize strictly (unknown keys rejected) and validate. The file is
/// parsed once before overrides so that defaulted sections are materialized
/// and can be overridden field by field.
pub fn load_config(path: &Path, overrides: &[String]) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("reading {}: {e}", path.display())))?;
    let base: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let mut value = serde_json::to_value(&base)
        .map_err(|e| CliError::runtime(format!("re-serializing config: {e}")))?;
    for ov in overrides {
        apply_override(&mut value, ov)?;
    }
    let cfg: ExperimentConfig = serde_json::from_value(value)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

fn apply_override(root: &mut serde_json::Value, assignment: &str) -> CliResult<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("override '{assignment}' is not key=value")))?;
    let parsed: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !cur.is_object() {
            return Err(CliError::usage(format!(
                "override path '{path}' does not address an object"
            )));
        }
        let map = cur.as_object_mut().unwrap();
        if i + 1 == parts.len() {
            map.insert(part.to_string(), parsed);
            return Ok(());
        }
        cur = map
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs_json() -> String {
        r#"{
            "dataset": {"kind": "blobs", "classes": 3, "per_class": 20, "dim": 4, "spread": 0.3, "seed": 1},
            "arch": [4, 8, 3]
        }"#
        .to_string()
    }

    #[test]
    fn defaults_mirror_the_reference_hyperparameters() {
        let cfg: ExperimentConfig = serde_json::from_str(&blobs_json()).unwrap();
        assert_eq!(cfg.sgd.epochs, 10);
        assert_eq!(cfg.sgd.batch_size, 128);
        assert_eq!(cfg.sgd.lr, 0.01);
        assert_eq!(cfg.sgd.momentum, 0.9);
        assert_eq!(cfg.transfer.steps, 10);
        assert_eq!(cfg.transfer.match_batch_size, 128);
        assert_eq!(cfg.transfer.schedule, LambdaSchedule::Cosine);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = r#"{
            "dataset": {"kind": "blobs", "classes": 3, "per_class": 20, "dim": 4, "spread": 0.3, "seed": 1},
            "arch": [4, 8, 3],
            "typo_key": 1
        }"#;
        assert!(serde_json::from_str::<ExperimentConfig>(bad).is_err());
        let bad2 = r#"{
            "dataset": {"kind": "blobs", "classes": 3, "per_class": 20, "dim": 4, "spread": 0.3, "seed": 1, "oops": 2},
            "arch": [4, 8, 3]
        }"#;
        assert!(serde_json::from_str::<ExperimentConfig>(bad2).is_err());
    }

    #[test]
    fn overrides_apply_before_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, blobs_json()).unwrap();
        let cfg = load_config(&path, &["sgd.epochs=3".into(), "transfer.method=\"naive\"".into()])
            .unwrap();
        assert_eq!(cfg.sgd.epochs, 3);
        assert_eq!(cfg.transfer.method, TransferMethod::Naive);
        // bad override value caught by strict deserialization
        assert!(load_config(&path, &["sgd.epochs=\"many\"".into()]).is_err());
    }
}
