use crate::checkpoint;
use crate::error::{CliResult, OrExit};
use anyhow::Context;
use clap::Args;
use std::path::PathBuf;

pub const EMBEDDINGS_MAGIC: &str = "# deepj-embeddings v1";

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    /// Checkpoint or run directory.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportSummary {
    pub rows: usize,
    pub columns: usize,
    /// Per genre: largest gap between the model's mixture embedding and the
    /// weighted average of member rows.
    pub linearity: Vec<(String, f64)>,
}

/// Writes one row per composer: name, genre and its embedding row.
///
/// The header comments record a linearity spot check: for every genre the
/// model embeds the equal-weight mixture of its composers, which must equal
/// the average of the exported rows.
pub fn run(args: &ExportArgs) -> CliResult<ExportSummary> {
    let dir = checkpoint::resolve(&args.checkpoint).or_data()?;
    let ckpt = checkpoint::load(&dir).or_data()?;
    let catalog = ckpt.catalog().or_data()?;
    let w = ckpt
        .model
        .params()
        .by_name("style.embed")
        .context("checkpoint has no style embedding")
        .or_data()?;

    let mut linearity = Vec::new();
    for (genre, members) in catalog.genres() {
        let style = catalog.genre_style(&genre).or_data()?;
        let h = ckpt.model.embed_style(&style).or_data()?;
        let gap = (0..w.cols())
            .map(|j| {
                let avg = members.iter().map(|&m| f64::from(w.get(m, j))).sum::<f64>() / members.len() as f64;
                (f64::from(h[j]) - avg).abs()
            })
            .fold(0.0, f64::max);
        linearity.push((genre, gap));
    }

    let mut text = format!("{EMBEDDINGS_MAGIC}\n# checkpoint {} sha256 {}\n", dir.display(), ckpt.sha256);
    for (genre, gap) in &linearity {
        text.push_str(&format!(
            "# linearity {genre}: max |embed(genre mixture) - mean(member rows)| = {gap:e}\n"
        ));
    }
    let mut out = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["name".to_string(), "genre".to_string()];
    header.extend((0..w.cols()).map(|j| format!("e{j}")));
    out.write_record(&header).or_data()?;
    for (k, c) in ckpt.composers.iter().enumerate() {
        let mut row = vec![c.name.clone(), c.genre.clone()];
        row.extend(w.row(k).iter().map(|x| x.to_string()));
        out.write_record(&row).or_data()?;
    }
    text.push_str(&String::from_utf8(out.into_inner().map_err(|e| anyhow::anyhow!("{e}")).or_data()?).or_data()?);
    std::fs::write(&args.out, text).or_data()?;
    Ok(ExportSummary {
        rows: ckpt.composers.len(),
        columns: header.len(),
        linearity,
    })
}

pub fn print(s: &ExportSummary, args: &ExportArgs) {
    println!("wrote {} rows x {} columns to {}", s.rows, s.columns, args.out.display());
}
