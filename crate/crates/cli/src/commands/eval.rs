use crate::cache::load_dataset;
use crate::checkpoint;
use crate::error::{CliError, CliResult, OrExit};
use anyhow::anyhow;
use clap::Args;
use deepj_core::train::{evaluate, split_validation, LossBreakdown, TrainConfig};
use deepj_core::{NoteRoll, StyleVector};
use serde::Serialize;
use std::path::PathBuf;

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Checkpoint or run directory.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Ingested cache directory.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Also write the table as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Losses {
    pub play: f64,
    pub replay: f64,
    pub dynamics: f64,
    pub total: f64,
}

impl From<LossBreakdown> for Losses {
    fn from(b: LossBreakdown) -> Self {
        Self {
            play: b.play,
            replay: b.replay,
            dynamics: b.dynamics,
            total: b.total,
        }
    }
}

/// Held-out pieces of one group scored under their own style and under
/// every other group's style.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub group: String,
    pub pieces: usize,
    pub matched: Losses,
    /// Pooled over every other group's style; absent with one group.
    pub mismatched: Option<Losses>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub composers: Vec<EvalRow>,
    pub genres: Vec<EvalRow>,
}

fn score(
    model: &deepj_core::Model<f32>,
    rolls: &[&NoteRoll],
    style: &StyleVector,
    window: usize,
) -> anyhow::Result<LossBreakdown> {
    let pieces: Vec<_> = rolls.iter().map(|&r| (r, style)).collect();
    Ok(evaluate(model, &pieces, window)?)
}

/// Builds one table given each group's held-out rolls and style.
fn rows(
    model: &deepj_core::Model<f32>,
    groups: &[(String, Vec<&NoteRoll>, StyleVector)],
    window: usize,
) -> anyhow::Result<Vec<EvalRow>> {
    groups
        .iter()
        .enumerate()
        .filter(|(_, (_, rolls, _))| !rolls.is_empty())
        .map(|(i, (name, rolls, style))| {
            let matched = score(model, rolls, style, window)?;
            let mut mismatched: Option<LossBreakdown> = None;
            for (j, (_, _, other)) in groups.iter().enumerate() {
                if j != i {
                    let b = score(model, rolls, other, window)?;
                    mismatched = Some(mismatched.map_or(b, |m| m.merge(&b)));
                }
            }
            Ok(EvalRow {
                group: name.clone(),
                pieces: rolls.len(),
                matched: matched.into(),
                mismatched: mismatched.map(Losses::from),
            })
        })
        .collect()
}

/// Scores the validation split the checkpoint's run held out.
pub fn run(args: &EvalArgs) -> CliResult<EvalReport> {
    let dir = checkpoint::resolve(&args.checkpoint).or_data()?;
    let ckpt = checkpoint::load(&dir).or_data()?;
    let data = load_dataset(&args.dataset).or_data()?;
    if data.index.composers != ckpt.composers {
        return Err(CliError::data(anyhow!("dataset composers do not match the checkpoint")));
    }
    let defaults = TrainConfig::default();
    let (fraction, seed, window) = ckpt.train.as_ref().map_or(
        (defaults.validation_fraction, defaults.seed, defaults.tbptt_steps),
        |t| (t.validation_fraction, t.seed, t.tbptt_steps),
    );
    let (_, val) = split_validation(&data.examples, fraction, seed);
    if val.is_empty() {
        return Err(CliError::data(anyhow!(
            "the validation split is empty (fraction {fraction}); nothing to evaluate"
        )));
    }
    let model = &ckpt.model;
    let catalog = &data.catalog;
    let held = |members: &[usize]| -> Vec<&NoteRoll> {
        val.iter()
            .filter(|&&i| members.contains(&data.examples[i].composer))
            .map(|&i| &data.examples[i].roll)
            .collect()
    };
    let composer_groups: Vec<_> = catalog
        .composers()
        .iter()
        .enumerate()
        .map(|(k, c)| (c.name.clone(), held(&[k]), StyleVector::one_hot(catalog.len(), k)))
        .collect();
    let genre_groups = catalog
        .genres()
        .into_iter()
        .map(|(g, members)| Ok((g.clone(), held(&members), catalog.genre_style(&g)?)))
        .collect::<anyhow::Result<Vec<_>>>()
        .or_data()?;
    Ok(EvalReport {
        composers: rows(model, &composer_groups, window).or_data()?,
        genres: rows(model, &genre_groups, window).or_data()?,
    })
}

pub fn write_json(report: &EvalReport, args: &EvalArgs) -> CliResult<()> {
    if let Some(path) = &args.json {
        let mut json = serde_json::to_string_pretty(report).or_data()?;
        json.push('\n');
        std::fs::write(path, json).or_data()?;
    }
    Ok(())
}

pub fn print(report: &EvalReport) {
    for (title, rows) in [("composer", &report.composers), ("genre", &report.genres)] {
        println!(
            "{title:<16} {:>6} {:>10} {:>10} {:>10} {:>10} {:>12}",
            "pieces", "play", "replay", "dynamics", "matched", "mismatched"
        );
        for r in rows {
            let mm = r.mismatched.map_or("-".to_string(), |m| format!("{:.5}", m.total));
            println!(
                "{:<16} {:>6} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>12}",
                r.group, r.pieces, r.matched.play, r.matched.replay, r.matched.dynamics, r.matched.total, mm
            );
        }
    }
}
