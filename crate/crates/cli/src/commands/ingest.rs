use crate::cache::{
    encode_roll, CacheIndex, ComposerInfo, FailureEntry, PieceEntry, INDEX_FILE, INDEX_FORMAT, INDEX_VERSION,
};
use crate::error::{CliError, CliResult, OrExit};
use crate::manifest::DatasetManifest;
use anyhow::{anyhow, Context};
use clap::Args;
use deepj_core::midi::{parse_midi, quantize, Quantized};
use deepj_core::{PitchWindow, QuantGrid};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    /// Dataset manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Cache directory to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestSummary {
    pub pieces: usize,
    pub steps: usize,
    pub dropped_notes: usize,
    pub failures: Vec<FailureEntry>,
}

fn ingest_file(path: &Path) -> anyhow::Result<Quantized> {
    let bytes = std::fs::read(path)?;
    let score = parse_midi(&bytes)?;
    let grid = score.grid(QuantGrid::DEFAULT_STEPS_PER_BAR)?;
    Ok(quantize(&score.events, grid, PitchWindow::default(), score.end_tick)?)
}

/// Path as shown in the index: relative to the manifest, `/`-separated.
fn display_path(path: &Path, base: &Path) -> String {
    let rel = path.strip_prefix(base).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Runs `work` over `items` on up to `jobs` threads, keeping input order.
fn parallel_map<T: Sync, R: Send>(items: &[T], jobs: usize, work: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let jobs = jobs.clamp(1, items.len().max(1));
    let chunk = items.len().div_ceil(jobs).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| s.spawn(|| part.iter().map(&work).collect::<Vec<R>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("ingest worker panicked"))
            .collect()
    })
}

pub fn run(args: &IngestArgs) -> CliResult<IngestSummary> {
    let manifest = DatasetManifest::load(&args.manifest).or_data()?;
    let base = args.manifest.parent().unwrap_or(Path::new("")).to_path_buf();
    let files = manifest.resolve_files(&base).or_data()?;
    let jobs: Vec<(usize, PathBuf)> = files
        .into_iter()
        .enumerate()
        .flat_map(|(c, paths)| paths.into_iter().map(move |p| (c, p)))
        .collect();
    let threads = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let results = parallel_map(&jobs, threads, |(_, path)| ingest_file(path));

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))
        .or_data()?;
    let window = PitchWindow::default();
    let mut index = CacheIndex {
        format: INDEX_FORMAT.into(),
        version: INDEX_VERSION,
        steps_per_bar: QuantGrid::DEFAULT_STEPS_PER_BAR as usize,
        pitch_low: window.low(),
        notes: window.count(),
        composers: manifest
            .composers
            .iter()
            .map(|c| ComposerInfo {
                name: c.name.clone(),
                genre: c.genre.clone(),
            })
            .collect(),
        pieces: Vec::new(),
        failures: Vec::new(),
    };
    for ((composer, path), result) in jobs.iter().zip(results) {
        let source = display_path(path, &base);
        match result {
            Ok(q) => {
                let file = format!("piece-{:05}.djrl", index.pieces.len());
                std::fs::write(args.out.join(&file), encode_roll(&q.roll)).or_data()?;
                index.pieces.push(PieceEntry {
                    file,
                    source,
                    composer: *composer,
                    steps: q.roll.steps(),
                    kept_notes: q.kept,
                    dropped_notes: q.dropped,
                });
            }
            Err(e) => index.failures.push(FailureEntry {
                source,
                composer: *composer,
                error: format!("{e:#}"),
            }),
        }
    }
    remove_stale(&args.out, &index).or_data()?;
    let mut json = serde_json::to_string_pretty(&index).or_data()?;
    json.push('\n');
    std::fs::write(args.out.join(INDEX_FILE), json).or_data()?;

    let summary = IngestSummary {
        pieces: index.pieces.len(),
        steps: index.pieces.iter().map(|p| p.steps).sum(),
        dropped_notes: index.pieces.iter().map(|p| p.dropped_notes).sum(),
        failures: index.failures.clone(),
    };
    if summary.pieces == 0 {
        return Err(CliError::data(anyhow!(
            "every file failed to ingest ({} failures)",
            summary.failures.len()
        )));
    }
    Ok(summary)
}

/// Deletes roll files from an earlier run that the new index no longer names.
fn remove_stale(dir: &Path, index: &CacheIndex) -> anyhow::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.ends_with(".djrl") && !index.pieces.iter().any(|p| p.file == name) {
            std::fs::remove_file(&path)?;
        }
    }
    Ok(())
}

pub fn print(summary: &IngestSummary) {
    for f in &summary.failures {
        eprintln!("skipped {}: {}", f.source, f.error);
    }
    println!(
        "ingested {} pieces, {} steps, {} notes outside the pitch window, {} files failed",
        summary.pieces,
        summary.steps,
        summary.dropped_notes,
        summary.failures.len()
    );
}
