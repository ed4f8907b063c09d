//! File formats and commands around `deepj-core`: dataset manifests, the
//! roll cache, checkpoints, training configs and logs.

pub mod cache;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod log;
pub mod manifest;

use clap::{Parser, Subcommand};
use commands::{embeddings, eval, generate, gradcheck, ingest, train};
use error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "deepj", version, about = "Style-conditioned polyphonic music generation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and quantize every MIDI file of a manifest into a roll cache.
    Ingest(ingest::IngestArgs),
    /// Train, resuming from the latest checkpoint in the run directory.
    Train(train::TrainArgs),
    /// Sample a piece in a given style and write MIDI plus a sidecar JSON.
    Generate(generate::GenerateArgs),
    /// Write the style embedding rows as CSV.
    ExportEmbeddings(embeddings::ExportArgs),
    /// Check every gradient against central differences.
    Gradcheck(gradcheck::GradcheckArgs),
    /// Held-out losses under matched and mismatched styles.
    Eval(eval::EvalArgs),
}

pub fn run(command: &Command) -> CliResult<()> {
    match command {
        Command::Ingest(a) => ingest::print(&ingest::run(a)?),
        Command::Train(a) => train::print(&train::run(a)?),
        Command::Generate(a) => generate::print(&generate::run(a)?, a),
        Command::ExportEmbeddings(a) => embeddings::print(&embeddings::run(a)?, a),
        Command::Gradcheck(a) => {
            gradcheck::run(a)?;
            println!("all gradients match");
        }
        Command::Eval(a) => {
            let report = eval::run(a)?;
            eval::print(&report);
            eval::write_json(&report, a)?;
        }
    }
    Ok(())
}
