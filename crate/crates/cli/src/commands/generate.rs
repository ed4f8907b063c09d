use crate::checkpoint;
use crate::error::{CliError, CliResult, OrExit};
use anyhow::anyhow;
use clap::Args;
use deepj_core::generate::{generate, parse_style_spec, SamplerConfig};
use deepj_core::midi::roll_to_midi;
use deepj_core::model::StyleError;
use deepj_core::{NoteRoll, PitchWindow, QuantGrid};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::PathBuf;

pub const SIDECAR_FORMAT: &str = "deepj-generation";
pub const SIDECAR_VERSION: u32 = 1;
const TICKS_PER_QUARTER: u32 = 480;

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    /// Checkpoint directory, or a run directory (uses `best/`, else the latest epoch).
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Genre name, composer name, or `name:weight,...` mixture.
    #[arg(long)]
    pub style: String,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(1..))]
    pub bars: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output MIDI path; the sidecar JSON goes next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 120.0)]
    pub tempo: f64,
    /// Apply the silence temperature to replay as well as play.
    #[arg(long)]
    pub temper_replay: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Sidecar {
    pub format: String,
    pub version: u32,
    pub checkpoint: String,
    pub checkpoint_epoch: usize,
    pub checkpoint_sha256: String,
    pub style_spec: String,
    pub style: BTreeMap<String, f64>,
    pub bars: u32,
    pub steps: usize,
    pub seed: u64,
    pub tempo_bpm: f64,
    pub temper_replay: bool,
    pub played_cells: usize,
}

#[derive(Debug, Clone)]
pub struct GenerateSummary {
    pub roll: NoteRoll,
    pub sidecar: Sidecar,
    pub sidecar_path: PathBuf,
}

pub fn run(args: &GenerateArgs) -> CliResult<GenerateSummary> {
    if !(args.tempo.is_finite() && args.tempo > 0.0) {
        return Err(CliError::usage(anyhow!("--tempo must be positive")));
    }
    let dir = checkpoint::resolve(&args.checkpoint).or_data()?;
    let ckpt = checkpoint::load(&dir).or_data()?;
    let catalog = ckpt.catalog().or_data()?;
    let style = parse_style_spec(&args.style, &catalog).map_err(|e| match e {
        StyleError::StyleUnknown(name) => CliError::usage(anyhow!(
            "unknown style `{name}`; known composers: {}",
            ckpt.composers.iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join(", ")
        )),
        other => CliError::usage(other),
    })?;
    let cfg = ckpt.model.config().clone();
    let sampler = SamplerConfig {
        temper_replay: args.temper_replay,
        ..SamplerConfig::new(style.clone(), args.bars as usize, args.seed)
    };
    let roll = generate(&ckpt.model, &sampler).or_data()?;

    let grid = QuantGrid::new(cfg.beat_dim as u32, TICKS_PER_QUARTER).or_data()?;
    let window = PitchWindow::new(cfg.pitch_low, cfg.notes as u8).or_data()?;
    let midi = roll_to_midi(&roll, args.tempo, grid, window);
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).or_data()?;
    }
    std::fs::write(&args.out, midi).or_data()?;

    let sidecar = Sidecar {
        format: SIDECAR_FORMAT.into(),
        version: SIDECAR_VERSION,
        checkpoint: dir.display().to_string(),
        checkpoint_epoch: ckpt.epoch,
        checkpoint_sha256: ckpt.sha256.clone(),
        style_spec: args.style.clone(),
        style: ckpt
            .composers
            .iter()
            .zip(style.weights())
            .filter(|(_, &w)| w > 0.0)
            .map(|(c, &w)| (c.name.clone(), w))
            .collect(),
        bars: args.bars,
        steps: roll.steps(),
        seed: args.seed,
        tempo_bpm: args.tempo,
        temper_replay: args.temper_replay,
        played_cells: roll.played_cells(),
    };
    let sidecar_path = args.out.with_extension("json");
    let mut json = serde_json::to_string_pretty(&sidecar).or_data()?;
    json.push('\n');
    std::fs::write(&sidecar_path, json).or_data()?;
    Ok(GenerateSummary {
        roll,
        sidecar,
        sidecar_path,
    })
}

pub fn print(s: &GenerateSummary, args: &GenerateArgs) {
    println!(
        "wrote {} ({} steps, {} sounding cells) and {}",
        args.out.display(),
        s.roll.steps(),
        s.roll.played_cells(),
        s.sidecar_path.display()
    );
}
