//! One module per subcommand. Each exposes its clap arguments, a `run`
//! returning a summary, and a `print` for the terminal.

pub mod embeddings;
pub mod eval;
pub mod generate;
pub mod gradcheck;
pub mod ingest;
pub mod train;
