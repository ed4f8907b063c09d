//! Training log: `log.csv` in the checkpoint directory.
//!
//! The first line is `# deepj-train-log v1`, then a header row, then one
//! row per completed epoch. `epoch` counts completed epochs, matching the
//! checkpoint directory names. Losses are written in shortest round-trip
//! form; validation columns are empty when nothing was held out.

use anyhow::{bail, Context, Result};
use deepj_core::train::{EpochReport, LossBreakdown};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

pub const LOG_FILE: &str = "log.csv";
pub const LOG_MAGIC: &str = "# deepj-train-log v1";
pub const LOG_COLUMNS: [&str; 11] = [
    "epoch",
    "steps",
    "train_play",
    "train_replay",
    "train_dynamics",
    "train_total",
    "val_play",
    "val_replay",
    "val_dynamics",
    "val_total",
    "wall_time_s",
];

fn losses(b: Option<&LossBreakdown>) -> [String; 4] {
    match b {
        Some(b) => [b.play, b.replay, b.dynamics, b.total].map(|x| x.to_string()),
        None => Default::default(),
    }
}

pub fn row(report: &EpochReport, wall_time_s: f64) -> Vec<String> {
    let mut r = vec![(report.epoch + 1).to_string(), report.steps.to_string()];
    r.extend(losses(Some(&report.train)));
    r.extend(losses(report.validation.as_ref()));
    r.push(format!("{wall_time_s:.3}"));
    r
}

/// Prepares the log for a run starting after `completed` epochs: creates it
/// with a header, or drops rows past `completed` left by an interrupted run.
pub fn open(path: &Path, completed: usize) -> Result<()> {
    if !path.exists() {
        let mut text = format!("{LOG_MAGIC}\n");
        text.push_str(&LOG_COLUMNS.join(","));
        text.push('\n');
        std::fs::write(path, text)?;
        return Ok(());
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut lines = text.lines();
    if lines.next() != Some(LOG_MAGIC) {
        bail!("{} is not a version 1 training log", path.display());
    }
    let mut kept = vec![LOG_MAGIC.to_string()];
    for line in lines {
        let epoch = line.split(',').next().and_then(|f| f.parse::<usize>().ok());
        if epoch.is_none_or(|e| e <= completed) {
            kept.push(line.to_string());
        }
    }
    let mut out = kept.join("\n");
    out.push('\n');
    std::fs::write(path, out)?;
    Ok(())
}

pub fn append(path: &Path, fields: &[String]) -> Result<()> {
    let mut file = OpenOptions::new().append(true).open(path)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(fields)?;
    file.write_all(&w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)?;
    Ok(())
}

/// Parsed rows, header excluded.
pub fn read(path: &Path) -> Result<Vec<Vec<String>>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    r.records()
        .map(|rec| Ok(rec?.iter().map(str::to_string).collect()))
        .collect()
}
