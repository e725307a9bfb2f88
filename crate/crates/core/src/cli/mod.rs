//! Command-line front end: `prepare`, `train`, `tag`, `evaluate`, `grid`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error
//! (unreadable or malformed input, corrupt checkpoint), 3 numeric failure
//! (training diverged).

mod commands;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{cmd_evaluate, cmd_grid, cmd_prepare, cmd_tag, cmd_train, TrainOutcome};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "deepvar", version, about = "Genomic variant mention recognition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert documents with offset annotations into BIO files.
    Prepare(PrepareArgs),
    /// Train a model from a run config and write a checkpoint and reports.
    Train(TrainArgs),
    /// Tag sentences with a trained checkpoint.
    Tag(TagArgs),
    /// Score predicted tags (or a checkpoint) against a gold BIO file.
    Evaluate(EvaluateArgs),
    /// Train every selected point of the config's hyperparameter grid.
    Grid(GridArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PrepareArgs {
    /// Documents, one `doc_id<TAB>text` per line.
    #[arg(long)]
    pub text: PathBuf,
    /// Mentions, one `doc_id<TAB>start<TAB>end<TAB>type<TAB>surface` per line.
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Run config; only its `[tokenizer]` section is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write a train/validation split with this validation share.
    #[arg(long)]
    pub holdout: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Overrides `train.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    /// One raw sentence per line.
    Text,
    /// BIO file; existing tags are ignored.
    Bio,
}

#[derive(Debug, Clone, Args)]
pub struct TagArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = InputFormat::Text)]
    pub format: InputFormat,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Run config; only its `[tokenizer]` section is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["predicted", "checkpoint"])))]
pub struct EvaluateArgs {
    #[arg(long)]
    pub gold: PathBuf,
    /// BIO file of predictions aligned with `--gold`.
    #[arg(long)]
    pub predicted: Option<PathBuf>,
    /// Tag the gold tokens with this checkpoint instead.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Writes `eval.txt` and `eval.json` here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Number of trials; fewer than the grid size samples under the seed.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Concurrent trials (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Reuse trials whose report already exists in `--out-dir`.
    #[arg(long)]
    pub resume: bool,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => EXIT_USAGE,
        Error::Numeric(_) | Error::Shape { .. } => EXIT_NUMERIC,
        Error::Parse { .. }
        | Error::Data(_)
        | Error::UnknownTag(_)
        | Error::Span(_)
        | Error::Checkpoint { .. }
        | Error::Io { .. }
        | Error::Json(_) => EXIT_DATA,
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> crate::Result<()> {
    match cli.command {
        Command::Prepare(a) => cmd_prepare(&a, out),
        Command::Train(a) => cmd_train(&a, out).map(|_| ()),
        Command::Tag(a) => cmd_tag(&a, out),
        Command::Evaluate(a) => cmd_evaluate(&a, out).map(|_| ()),
        Command::Grid(a) => cmd_grid(&a, out).map(|_| ()),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("deepvar: {e}");
            exit_code(&e)
        }
    }
}
