//! Pipeline configuration file (TOML). Command-line flags override it.
//!
//! ```toml
//! class_list = "classes.txt"          # optional; canonical order otherwise
//! fusion_op = "mean"                  # mean | max | median
//! combine_weight = 0.5                # weight of the merged branches vs the standard model
//! epochs = [60, 70, 80, 90, 100]      # checkpoints averaged by `fuse --pattern`
//! seq_lens = [16]                     # first entry is the default for `plan`
//! cutout_fraction = 0.25
//! augment_probability = 0.5
//! cutoff_epoch = 50
//! seed = 0
//! ```
//!
//! Training hyperparameters of the recognition models are not used by this
//! crate. For reference, the score files these defaults were chosen for came
//! from 100-epoch AdamW runs (learning rate 5e-4, weight decay 0.07, batch
//! size 8); InternVideo runs used sequence length 16 and no upsampling.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augmentation::Schedule;
use crate::ensemble::{FuseOp, DEFAULT_COMBINE_WEIGHT};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {message}", .path.display())]
    Read { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub class_list: Option<PathBuf>,
    pub fusion_op: FuseOp,
    pub combine_weight: f64,
    pub epochs: Vec<u32>,
    pub seq_lens: Vec<usize>,
    pub cutout_fraction: f64,
    pub augment_probability: f64,
    pub cutoff_epoch: u32,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let schedule = Schedule::default();
        PipelineConfig {
            class_list: None,
            fusion_op: FuseOp::Mean,
            combine_weight: DEFAULT_COMBINE_WEIGHT,
            epochs: vec![60, 70, 80, 90, 100],
            seq_lens: vec![16],
            cutout_fraction: schedule.cutout_fraction,
            augment_probability: schedule.probability,
            cutoff_epoch: schedule.cutoff_epoch,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let read_err = |message: String| ConfigError::Read {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
        let mut cfg: PipelineConfig = toml::from_str(&text).map_err(|e| read_err(e.to_string()))?;
        // Relative class-list paths are relative to the config file.
        if let (Some(list), Some(dir)) = (&cfg.class_list, path.parent()) {
            if list.is_relative() {
                cfg.class_list = Some(dir.join(list));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(0.0..=1.0).contains(&self.combine_weight) {
            return bad(format!("combine_weight {} not in [0, 1]", self.combine_weight));
        }
        if self.epochs.is_empty() || self.epochs.contains(&0) {
            return bad("epochs must be a non-empty list of positive epochs".into());
        }
        if self.seq_lens.is_empty() || self.seq_lens.contains(&0) {
            return bad("seq_lens must be a non-empty list of positive lengths".into());
        }
        self.schedule()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            probability: self.augment_probability,
            cutoff_epoch: self.cutoff_epoch,
            cutout_fraction: self.cutout_fraction,
        }
    }
}
