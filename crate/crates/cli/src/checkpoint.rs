//! Checkpoints.
//!
//! A checkpoint is a directory with `manifest.json` and `tensors.bin`. The
//! blob is 32-bit little-endian floats: every parameter in manifest order,
//! then the optimizer's first and second moments in the same order. The
//! manifest lists each tensor's name, shape and float offset, plus the
//! model hyperparameters, composer names, optimizer state and the blob's
//! SHA-256.
//!
//! A training run writes `epoch-NNNN/` after every epoch (NNNN = epochs
//! completed) and mirrors the lowest validation loss into `best/`.

use crate::cache::{check_header, ComposerInfo};
use crate::config::TrainSection;
use anyhow::{bail, ensure, Context, Result};
use deepj_core::model::{param_layout, ChosenSignal};
use deepj_core::train::{NadamConfig, OptState};
use deepj_core::{Model, ModelConfig, ParamStore, StyleCatalog, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const CHECKPOINT_FORMAT: &str = "deepj-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "tensors.bin";
pub const BEST_DIR: &str = "best";

/// Serialized form of [`ModelConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub notes: usize,
    pub pitch_low: u8,
    pub time_units: usize,
    pub note_units: usize,
    pub embed_dim: usize,
    pub conv_filters: usize,
    pub conv_width: usize,
    pub layers_per_axis: usize,
    pub beat_dim: usize,
    pub pitch_class: bool,
    pub styles: usize,
    /// `"triple"` or `"play"`.
    pub chosen: String,
}

impl From<&ModelConfig> for ModelSpec {
    fn from(c: &ModelConfig) -> Self {
        Self {
            notes: c.notes,
            pitch_low: c.pitch_low,
            time_units: c.time_units,
            note_units: c.note_units,
            embed_dim: c.embed_dim,
            conv_filters: c.conv_filters,
            conv_width: c.conv_width,
            layers_per_axis: c.layers_per_axis,
            beat_dim: c.beat_dim,
            pitch_class: c.pitch_class,
            styles: c.styles,
            chosen: match c.chosen {
                ChosenSignal::Triple => "triple",
                ChosenSignal::PlayOnly => "play",
            }
            .into(),
        }
    }
}

impl ModelSpec {
    pub fn to_config(&self) -> Result<ModelConfig> {
        let chosen = match self.chosen.as_str() {
            "triple" => ChosenSignal::Triple,
            "play" => ChosenSignal::PlayOnly,
            other => bail!("unknown chosen-note signal `{other}`"),
        };
        let cfg = ModelConfig {
            notes: self.notes,
            pitch_low: self.pitch_low,
            time_units: self.time_units,
            note_units: self.note_units,
            embed_dim: self.embed_dim,
            conv_filters: self.conv_filters,
            conv_width: self.conv_width,
            layers_per_axis: self.layers_per_axis,
            beat_dim: self.beat_dim,
            pitch_class: self.pitch_class,
            styles: self.styles,
            chosen,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    /// Offset into the blob, in floats.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerEntry {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub first_moment: Vec<TensorEntry>,
    pub second_moment: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    /// Epochs completed.
    pub epoch: usize,
    pub model: ModelSpec,
    pub composers: Vec<ComposerInfo>,
    pub train: Option<TrainSection>,
    /// Lowest validation total seen by the run so far.
    pub best_validation: Option<f64>,
    pub tensors: Vec<TensorEntry>,
    pub optimizer: Option<OptimizerEntry>,
    pub blob_floats: usize,
    pub blob_sha256: String,
}

/// Everything a checkpoint holds, in memory.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub epoch: usize,
    pub model: Model<f32>,
    pub composers: Vec<ComposerInfo>,
    pub train: Option<TrainSection>,
    pub best_validation: Option<f64>,
    pub optimizer: Option<OptState<f32>>,
    /// SHA-256 of `tensors.bin`, hex.
    pub sha256: String,
}

impl Checkpoint {
    pub fn catalog(&self) -> Result<StyleCatalog> {
        ComposerInfo::catalog(&self.composers)
    }
}

fn push_tensors<'a>(
    tensors: impl Iterator<Item = (&'a str, &'a Tensor<f32>)>,
    blob: &mut Vec<f32>,
) -> Vec<TensorEntry> {
    tensors
        .map(|(name, t)| {
            let entry = TensorEntry {
                name: name.to_string(),
                shape: [t.rows(), t.cols()],
                offset: blob.len(),
            };
            blob.extend_from_slice(t.data());
            entry
        })
        .collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes a checkpoint into `dir`, replacing what is there.
pub fn save(dir: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut blob = Vec::new();
    let tensors = push_tensors(ckpt.model.params().iter(), &mut blob);
    let optimizer = ckpt.optimizer.as_ref().map(|opt| {
        let names = || ckpt.model.params().iter().map(|(n, _)| n);
        let m = push_tensors(names().zip(&opt.m), &mut blob);
        let v = push_tensors(names().zip(&opt.v), &mut blob);
        OptimizerEntry {
            step: opt.step,
            lr: opt.config.lr,
            beta1: opt.config.beta1,
            beta2: opt.config.beta2,
            eps: opt.config.eps,
            first_moment: m,
            second_moment: v,
        }
    });
    let bytes: Vec<u8> = blob.iter().flat_map(|x| x.to_le_bytes()).collect();
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        epoch: ckpt.epoch,
        model: ModelSpec::from(ckpt.model.config()),
        composers: ckpt.composers.clone(),
        train: ckpt.train.clone(),
        best_validation: ckpt.best_validation,
        tensors,
        optimizer,
        blob_floats: blob.len(),
        blob_sha256: sha256_hex(&bytes),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    std::fs::write(dir.join(BLOB_FILE), &bytes)?;
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    std::fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(())
}

fn read_tensors(blob: &[f32], entries: &[TensorEntry]) -> Result<Vec<(String, Tensor<f32>)>> {
    entries
        .iter()
        .map(|e| {
            let [r, c] = e.shape;
            let end = e.offset + r * c;
            ensure!(end <= blob.len(), "tensor `{}` runs past the blob", e.name);
            Ok((e.name.clone(), Tensor::from_vec(r, c, blob[e.offset..end].to_vec())?))
        })
        .collect()
}

/// Reads the checkpoint in `dir` and checks it against its own manifest.
pub fn load(dir: &Path) -> Result<Checkpoint> {
    let path = dir.join(MANIFEST_FILE);
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("malformed {}", path.display()))?;
    check_header(&value, CHECKPOINT_FORMAT, CHECKPOINT_VERSION)
        .with_context(|| format!("in {}", path.display()))?;
    let manifest: CheckpointManifest =
        serde_json::from_value(value).with_context(|| format!("malformed {}", path.display()))?;

    let bytes = std::fs::read(dir.join(BLOB_FILE))
        .with_context(|| format!("cannot read {}", dir.join(BLOB_FILE).display()))?;
    let sha256 = sha256_hex(&bytes);
    ensure!(sha256 == manifest.blob_sha256, "{} does not match its recorded hash", dir.join(BLOB_FILE).display());
    ensure!(bytes.len() == 4 * manifest.blob_floats, "tensor blob has the wrong length");
    let blob: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let config = manifest.model.to_config()?;
    ensure!(
        manifest.composers.len() == config.styles,
        "checkpoint lists {} composers for {} styles",
        manifest.composers.len(),
        config.styles
    );
    let layout = param_layout(&config);
    ensure!(
        layout.len() == manifest.tensors.len()
            && layout.iter().zip(&manifest.tensors).all(|((n, r, c), e)| *n == e.name && [*r, *c] == e.shape),
        "checkpoint tensors do not match the model layout"
    );
    let mut store = ParamStore::new();
    for (name, t) in read_tensors(&blob, &manifest.tensors)? {
        store.insert(&name, t)?;
    }
    let model = Model::from_params(config, store)?;

    let optimizer = match &manifest.optimizer {
        None => None,
        Some(o) => {
            let moments = |entries: &[TensorEntry]| -> Result<Vec<Tensor<f32>>> {
                ensure!(
                    entries.len() == manifest.tensors.len()
                        && entries.iter().zip(&manifest.tensors).all(|(a, b)| a.name == b.name && a.shape == b.shape),
                    "optimizer moments do not match the parameters"
                );
                Ok(read_tensors(&blob, entries)?.into_iter().map(|(_, t)| t).collect())
            };
            Some(OptState {
                config: NadamConfig {
                    lr: o.lr,
                    beta1: o.beta1,
                    beta2: o.beta2,
                    eps: o.eps,
                },
                step: o.step,
                m: moments(&o.first_moment)?,
                v: moments(&o.second_moment)?,
            })
        }
    };
    Ok(Checkpoint {
        epoch: manifest.epoch,
        model,
        composers: manifest.composers,
        train: manifest.train,
        best_validation: manifest.best_validation,
        optimizer,
        sha256,
    })
}

pub fn epoch_dir(root: &Path, epoch: usize) -> PathBuf {
    root.join(format!("epoch-{epoch:04}"))
}

/// The highest-numbered `epoch-NNNN` directory under `root` holding a manifest.
pub fn latest(root: &Path) -> Result<Option<PathBuf>> {
    if !root.is_dir() {
        return Ok(None);
    }
    let mut best: Option<(usize, PathBuf)> = None;
    for entry in std::fs::read_dir(root)? {
        let path = entry?.path();
        let Some(n) = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("epoch-"))
            .and_then(|n| n.parse::<usize>().ok())
        else {
            continue;
        };
        if path.join(MANIFEST_FILE).is_file() && best.as_ref().is_none_or(|(b, _)| n > *b) {
            best = Some((n, path));
        }
    }
    Ok(best.map(|(_, p)| p))
}

/// Resolves a user-supplied checkpoint path: a checkpoint directory itself,
/// or a run directory, in which case `best/` wins over the latest epoch.
pub fn resolve(path: &Path) -> Result<PathBuf> {
    if path.join(MANIFEST_FILE).is_file() {
        return Ok(path.to_path_buf());
    }
    if path.join(BEST_DIR).join(MANIFEST_FILE).is_file() {
        return Ok(path.join(BEST_DIR));
    }
    match latest(path)? {
        Some(p) => Ok(p),
        None => bail!("no checkpoint found at {}", path.display()),
    }
}
