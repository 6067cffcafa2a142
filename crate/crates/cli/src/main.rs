//! `oracle`: train, predict, explain, report and simulate from the command
//! line. Exit codes: 0 success, 1 usage/config error, 2 data error,
//! 3 external-service error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{AppConfig, FileConfig};

#[derive(Debug)]
pub enum AppError {
    Usage(String),
    Data(String),
    External(String),
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            AppError::Usage(_) => 1,
            AppError::Data(_) => 2,
            AppError::External(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Usage(m) | AppError::Data(m) | AppError::External(m) => m,
        }
    }
}

impl From<oracle_core::IngestError> for AppError {
    fn from(e: oracle_core::IngestError) -> Self {
        match e {
            oracle_core::IngestError::Api(_) => AppError::External(e.to_string()),
            _ => AppError::Data(e.to_string()),
        }
    }
}

impl From<oracle_core::FeatureError> for AppError {
    fn from(e: oracle_core::FeatureError) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<oracle_core::ModelError> for AppError {
    fn from(e: oracle_core::ModelError) -> Self {
        match e {
            oracle_core::ModelError::Config(_) => AppError::Usage(e.to_string()),
            _ => AppError::Data(e.to_string()),
        }
    }
}

impl From<oracle_core::ExplainError> for AppError {
    fn from(e: oracle_core::ExplainError) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<oracle_core::TournamentError> for AppError {
    fn from(e: oracle_core::TournamentError) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<oracle_core::ReportError> for AppError {
    fn from(e: oracle_core::ReportError) -> Self {
        match e {
            oracle_core::ReportError::Config(_) => AppError::Usage(e.to_string()),
            oracle_core::ReportError::Transport(_)
            | oracle_core::ReportError::Status { .. }
            | oracle_core::ReportError::Malformed(_) => AppError::External(e.to_string()),
            _ => AppError::Data(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "oracle", version, about = "Handball score prediction toolkit")]
struct Cli {
    /// TOML config file; flags override it, it overrides environment.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for all written artifacts.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a score model, optionally starting from transferred embeddings.
    Train(TrainArgs),
    /// Predict the score of one match.
    Predict(PredictArgs),
    /// Attribute a prediction to lineup slots and covariates.
    Explain(ExplainArgs),
    /// Generate an LLM match report (requires a completion endpoint).
    Report(ReportArgs),
    /// Play out a full tournament file with the model.
    Simulate(SimulateArgs),
}

#[derive(clap::Args)]
pub struct TrainArgs {
    /// Match data file (JSONL, or CSV by extension).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Expected dataset category; errors if the data disagrees.
    #[arg(long, value_parser = commands::parse_category)]
    category: Option<oracle_core::Category>,
    /// Expected dataset gender; errors if the data disagrees.
    #[arg(long, value_parser = commands::parse_gender)]
    gender: Option<oracle_core::Gender>,
    /// Chronological train fraction, in (0,1).
    #[arg(long)]
    split: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Model file whose embedding rows seed this run (name-matched players).
    #[arg(long)]
    transfer_from: Option<PathBuf>,
    /// Vocabulary of the transfer source; defaults to vocab.json next to it.
    #[arg(long)]
    transfer_vocab: Option<PathBuf>,
    #[arg(long)]
    roster: Option<PathBuf>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    /// Hidden layer widths, e.g. --hidden 256 --hidden 128.
    #[arg(long)]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(clap::Args)]
pub struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// JSON file holding one match record.
    #[arg(long = "match")]
    match_file: PathBuf,
    /// Vocabulary file; defaults to vocab.json next to the model.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    roster: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "match")]
    match_file: PathBuf,
    /// Which output to attribute: home or away.
    #[arg(long)]
    team: String,
    /// Riemann steps for the path integral.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    roster: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct ReportArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "match")]
    match_file: PathBuf,
    /// Team name the report is written for (must play in the match).
    #[arg(long)]
    team: String,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    roster: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    tournament: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    roster: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), AppError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let mut cfg = AppConfig::resolve(file);
    if let Some(dir) = cli.output_dir {
        cfg.output_dir = dir;
    }
    match &cli.command {
        Command::Train(args) => commands::cmd_train(args, &cfg),
        Command::Predict(args) => commands::cmd_predict(args, &cfg),
        Command::Explain(args) => commands::cmd_explain(args, &cfg),
        Command::Report(args) => commands::cmd_report(args, &cfg),
        Command::Simulate(args) => commands::cmd_simulate(args, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
