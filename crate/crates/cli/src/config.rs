//! Training config file.
//!
//! ```json
//! {
//!   "tbptt_steps": 128, "dropout_hidden": 0.5, "dropout_input": 0.2,
//!   "lr": 0.001, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8,
//!   "batch_size": 1, "epochs": 10, "seed": 0,
//!   "loss_weights": [1, 1, 1], "grad_clip": null, "validation_fraction": 0.1,
//!   "model": { "time_units": 256, "note_units": 128 },
//!   "dataset": "cache/", "checkpoint_dir": "runs/a"
//! }
//! ```
//!
//! The first ten fields are required. `dataset` and `checkpoint_dir`
//! resolve against the config's directory and may be given on the
//! command line instead.

use anyhow::{Context, Result};
use deepj_core::train::{NadamConfig, TrainConfig};
use deepj_core::ModelConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Model widths; anything left out keeps the full-size default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOverrides {
    pub time_units: Option<usize>,
    pub note_units: Option<usize>,
    pub embed_dim: Option<usize>,
    pub conv_filters: Option<usize>,
    pub conv_width: Option<usize>,
    pub layers_per_axis: Option<usize>,
    pub pitch_class: Option<bool>,
}

impl ModelOverrides {
    pub fn apply(&self, base: ModelConfig) -> ModelConfig {
        ModelConfig {
            time_units: self.time_units.unwrap_or(base.time_units),
            note_units: self.note_units.unwrap_or(base.note_units),
            embed_dim: self.embed_dim.unwrap_or(base.embed_dim),
            conv_filters: self.conv_filters.unwrap_or(base.conv_filters),
            conv_width: self.conv_width.unwrap_or(base.conv_width),
            layers_per_axis: self.layers_per_axis.unwrap_or(base.layers_per_axis),
            pitch_class: self.pitch_class.unwrap_or(base.pitch_class),
            ..base
        }
    }
}

fn default_weights() -> [f64; 3] {
    [1.0; 3]
}

fn default_validation() -> f64 {
    0.1
}

/// The training fields of the config file, also stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub tbptt_steps: usize,
    pub dropout_hidden: f64,
    pub dropout_input: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    #[serde(default = "default_weights")]
    pub loss_weights: [f64; 3],
    #[serde(default)]
    pub grad_clip: Option<f64>,
    #[serde(default = "default_validation")]
    pub validation_fraction: f64,
    #[serde(default)]
    pub model: ModelOverrides,
}

impl TrainSection {
    pub fn to_train_config(&self) -> TrainConfig {
        TrainConfig {
            tbptt_steps: self.tbptt_steps,
            dropout_hidden: self.dropout_hidden,
            dropout_input: self.dropout_input,
            optimizer: NadamConfig {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
            },
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            loss_weights: self.loss_weights,
            grad_clip: self.grad_clip,
            validation_fraction: self.validation_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainFile {
    pub train: TrainSection,
    pub dataset: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
}

impl TrainFile {
    pub fn from_json(text: &str) -> Result<Self> {
        // Path keys are split off so unknown keys still fail the strict parse.
        let mut value: serde_json::Value = serde_json::from_str(text).context("malformed training config")?;
        let obj = value.as_object_mut().context("training config must be a JSON object")?;
        let dataset = obj.remove("dataset");
        let checkpoint_dir = obj.remove("checkpoint_dir");
        let train: TrainSection = serde_json::from_value(value).context("invalid training config")?;
        let path = |v: Option<serde_json::Value>, key: &str| -> Result<Option<PathBuf>> {
            match v {
                None | Some(serde_json::Value::Null) => Ok(None),
                Some(serde_json::Value::String(s)) => Ok(Some(PathBuf::from(s))),
                Some(_) => anyhow::bail!("`{key}` must be a path string"),
            }
        };
        Ok(Self {
            train,
            dataset: path(dataset, "dataset")?,
            checkpoint_dir: path(checkpoint_dir, "checkpoint_dir")?,
        })
    }

    /// Loads the file and makes its paths relative to its own directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut file = Self::from_json(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        file.dataset = file.dataset.map(|p| base.join(p));
        file.checkpoint_dir = file.checkpoint_dir.map(|p| base.join(p));
        Ok(file)
    }
}
