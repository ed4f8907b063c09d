use crate::cache::load_dataset;
use crate::checkpoint::{self, Checkpoint, BEST_DIR};
use crate::config::TrainFile;
use crate::error::{CliError, CliResult, OrExit};
use crate::log::{self, LOG_FILE};
use anyhow::{anyhow, bail};
use clap::Args;
use deepj_core::train::{self, EpochReport, LossBreakdown, OptState, TrainObserver};
use deepj_core::{Model, ModelConfig};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Training config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Ingested cache directory; overrides the config's `dataset`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Run directory for checkpoints and the log; overrides `checkpoint_dir`.
    #[arg(long)]
    pub checkpoints: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Only print the final summary.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub resumed_from: Option<usize>,
    pub reports: Vec<EpochReport>,
    pub run_dir: PathBuf,
}

struct Recorder<'a> {
    run_dir: &'a Path,
    base: Checkpoint,
    best: Option<f64>,
    started: Instant,
    quiet: bool,
}

impl Recorder<'_> {
    fn record(&mut self, report: &EpochReport, model: &Model<f32>, opt: &OptState<f32>) -> anyhow::Result<()> {
        let improved = match (&report.validation, self.best) {
            (Some(v), Some(b)) => v.total < b,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if improved {
            self.best = report.validation.map(|v| v.total);
        }
        let ckpt = Checkpoint {
            epoch: report.epoch + 1,
            model: model.clone(),
            best_validation: self.best,
            optimizer: Some(opt.clone()),
            ..self.base.clone()
        };
        checkpoint::save(&checkpoint::epoch_dir(self.run_dir, ckpt.epoch), &ckpt)?;
        if improved {
            checkpoint::save(&self.run_dir.join(BEST_DIR), &ckpt)?;
        }
        let elapsed = self.started.elapsed().as_secs_f64();
        self.started = Instant::now();
        log::append(&self.run_dir.join(LOG_FILE), &log::row(report, elapsed))?;
        if !self.quiet {
            print_epoch(report, improved);
        }
        Ok(())
    }
}

impl TrainObserver<f32> for Recorder<'_> {
    fn on_epoch(&mut self, report: &EpochReport, model: &Model<f32>, opt: &OptState<f32>) -> Result<(), String> {
        self.record(report, model, opt).map_err(|e| format!("{e:#}"))
    }
}

fn print_epoch(r: &EpochReport, best: bool) {
    let fmt = |b: &LossBreakdown| format!("{:.4} (play {:.4} replay {:.4} dyn {:.4})", b.total, b.play, b.replay, b.dynamics);
    let val = r.validation.as_ref().map_or("-".to_string(), fmt);
    println!(
        "epoch {:>4}  steps {:>7}  train {}  val {}{}",
        r.epoch + 1,
        r.steps,
        fmt(&r.train),
        val,
        if best { "  *" } else { "" }
    );
}

pub fn run(args: &TrainArgs) -> CliResult<TrainSummary> {
    let file = TrainFile::load(&args.config).or_usage()?;
    let mut section = file.train.clone();
    if let Some(seed) = args.seed {
        section.seed = seed;
    }
    let dataset_dir = args
        .dataset
        .clone()
        .or(file.dataset)
        .ok_or_else(|| CliError::usage(anyhow!("no dataset: pass --dataset or set `dataset` in the config")))?;
    let run_dir = args
        .checkpoints
        .clone()
        .or(file.checkpoint_dir)
        .ok_or_else(|| CliError::usage(anyhow!("no run directory: pass --checkpoints or set `checkpoint_dir`")))?;

    let data = load_dataset(&dataset_dir).or_data()?;
    let model_cfg = section.model.apply(ModelConfig {
        notes: data.index.notes,
        pitch_low: data.index.pitch_low,
        beat_dim: data.index.steps_per_bar,
        ..ModelConfig::new(data.catalog.len())
    });
    let train_cfg = section.to_train_config();
    train_cfg.validate(model_cfg.beat_dim).or_usage()?;
    model_cfg.validate().or_usage()?;

    std::fs::create_dir_all(&run_dir).or_data()?;
    let resumed = checkpoint::latest(&run_dir).or_data()?;
    let (base, model, opt) = match &resumed {
        Some(dir) => {
            let ckpt = checkpoint::load(dir).or_data()?;
            check_compatible(&ckpt, &model_cfg, &data.index.composers, &section).or_data()?;
            let model = ckpt.model.clone();
            let opt = ckpt
                .optimizer
                .clone()
                .ok_or_else(|| CliError::data(anyhow!("{} has no optimizer state", dir.display())))?;
            (ckpt, model, opt)
        }
        None => {
            let model = Model::new(model_cfg, section.seed).or_usage()?;
            let opt = OptState::new(train_cfg.optimizer, model.params());
            let base = Checkpoint {
                epoch: 0,
                model: model.clone(),
                composers: data.index.composers.clone(),
                train: None,
                best_validation: None,
                optimizer: None,
                sha256: String::new(),
            };
            (base, model, opt)
        }
    };
    let start = base.epoch;
    let base = Checkpoint {
        train: Some(section.clone()),
        ..base
    };
    log::open(&run_dir.join(LOG_FILE), start).or_data()?;

    let mut model = model;
    let mut opt = opt;
    let mut recorder = Recorder {
        run_dir: &run_dir,
        best: base.best_validation,
        base,
        started: Instant::now(),
        quiet: args.quiet,
    };
    if !args.quiet && start > 0 {
        println!("resuming after epoch {start}");
    }
    let reports = train::train(&mut model, &mut opt, &data.examples, &train_cfg, start, &mut recorder)
        .map_err(|e| CliError::data(anyhow!(e)))?;
    Ok(TrainSummary {
        resumed_from: resumed.map(|_| start),
        reports,
        run_dir,
    })
}

/// A resumed run must match the checkpoint in everything but epoch count.
fn check_compatible(
    ckpt: &Checkpoint,
    model: &ModelConfig,
    composers: &[crate::cache::ComposerInfo],
    section: &crate::config::TrainSection,
) -> anyhow::Result<()> {
    if ckpt.model.config() != model {
        bail!("model settings differ from the checkpoint being resumed");
    }
    if ckpt.composers != composers {
        bail!("dataset composers differ from the checkpoint being resumed");
    }
    if let Some(stored) = &ckpt.train {
        let same = crate::config::TrainSection {
            epochs: section.epochs,
            ..stored.clone()
        };
        if &same != section {
            bail!("training settings other than `epochs` differ from the checkpoint being resumed");
        }
    }
    Ok(())
}

pub fn print(summary: &TrainSummary) {
    if let Some(last) = summary.reports.last() {
        println!(
            "trained to epoch {} ({} optimizer steps); checkpoints in {}",
            last.epoch + 1,
            last.steps,
            summary.run_dir.display()
        );
    } else {
        println!("nothing to do: {} already holds the requested epochs", summary.run_dir.display());
    }
}
