//! `sqltrack` command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{Overrides, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(sqltrack::Error),
}

impl From<sqltrack::Error> for CliError {
    fn from(e: sqltrack::Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    /// 2 for configuration, 4 for transport, 3 for everything else.
    fn exit_code(&self) -> u8 {
        use sqltrack::Error;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e.root() {
                Error::Config(_) => 2,
                Error::Transport { .. } => 4,
                _ => 3,
            },
        }
    }
}

#[derive(Parser)]
#[command(name = "sqltrack", version, about = "Schema and context extraction for multi-turn text-to-SQL")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML configuration file; relative paths inside it resolve against its directory.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Extraction threshold s.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Context window length.
    #[arg(long, global = true)]
    window: Option<usize>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Call the configured endpoint instead of the offline stub.
    #[arg(long, global = true)]
    online: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate table and column annotations.
    Annotate,
    /// Train the schema extractor.
    Train,
    /// Extract schemas, select base SQL and emit the fine-tuning corpus.
    Run,
    /// Score a predictions file.
    Eval {
        /// JSON lines of `{db_id, interaction, turn, sql}`.
        #[arg(long)]
        predictions: PathBuf,
        /// `traces.jsonl` from `run`, for redundancy scores.
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Dump gold labels of every turn.
    Label,
    /// Print the pipeline trace of one turn.
    Inspect {
        #[arg(long)]
        interaction: String,
        #[arg(long)]
        turn: usize,
        #[arg(long)]
        db_id: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = cli.global;
    let ov = Overrides {
        seed: g.seed,
        output: g.output,
        checkpoint: g.checkpoint,
        threshold: g.threshold,
        window: g.window,
        workers: g.workers,
        online: g.online,
    };
    let result = RunConfig::load(g.config.as_deref(), &ov).and_then(|cfg| match cli.command {
        Command::Annotate => commands::annotate(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Run => commands::run(&cfg),
        Command::Eval { predictions, traces } => commands::eval(&cfg, &predictions, traces.as_deref()),
        Command::Label => commands::label(&cfg),
        Command::Inspect {
            interaction,
            turn,
            db_id,
        } => commands::inspect(&cfg, &interaction, turn, db_id.as_deref()),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
