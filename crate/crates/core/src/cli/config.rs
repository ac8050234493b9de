//! Experiment configuration as TOML.
//!
//! Every section and field is optional and falls back to its default;
//! unknown keys are rejected so a typo never silently becomes a default.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::DatasetConfig;
use crate::error::{config_err, Error, Result};
use crate::pipeline::{ModelConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    /// Where `gen-data` writes and every other command reads the dataset.
    pub dataset_dir: PathBuf,
    /// Root of the run directory layout.
    pub run_dir: PathBuf,
    /// Save `checkpoints/step-<n>.ckpt` every this many steps; 0 keeps only `last.ckpt`.
    pub checkpoint_every: u64,
    pub seed: u64,
    /// Single-threaded kernels with a fixed reduction order.
    pub deterministic: bool,
    /// Initial clouds per test image during evaluation.
    pub eval_chunks: usize,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            dataset_dir: PathBuf::from("data/toy"),
            run_dir: PathBuf::from("runs/default"),
            checkpoint_every: 500,
            seed: 0,
            deterministic: false,
            eval_chunks: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub data: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub io: IoConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err!("{}", e.to_string().trim_end()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.data.image_size != self.model.image_size {
            return Err(config_err!(
                "data.image_size {} differs from model.image_size {}",
                self.data.image_size,
                self.model.image_size
            ));
        }
        if self.io.eval_chunks == 0 {
            return Err(config_err!("io.eval_chunks must be positive"));
        }
        Ok(())
    }
}
