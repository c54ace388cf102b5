mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::config::Config;

#[derive(Parser, Debug)]
#[command(
    name = "forest-distill",
    version,
    about = "Distill tree ensembles into short rule lists"
)]
pub struct Cli {
    /// TOML file with default values for any flag; explicit flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "FOREST_DISTILL_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a random forest and write it as an ensemble document.
    Train(TrainArgs),
    /// Extract a rule list from an ensemble.
    Extract(ExtractArgs),
    /// Score a rule list on labelled data.
    Evaluate(EvaluateArgs),
    /// Compare a rule list with the ensemble it came from.
    Fidelity(FidelityArgs),
    /// Print a rule list.
    Show(ShowArgs),
}

#[derive(ValueEnum, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum TaskArg {
    Clf,
    Reg,
}

#[derive(ValueEnum, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum KindArg {
    Tabular,
    Shapelet,
}

#[derive(ValueEnum, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(ValueEnum, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ShowFormat {
    Text,
    Tree,
    Json,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// CSV with a header row, or a UCR file for shapelet forests.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Target column of a CSV (default: the last one).
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub trees: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub depth: Option<u64>,
    /// Candidate shapelets drawn at each node.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub shapelets_per_node: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[arg(long)]
    pub ensemble: Option<PathBuf>,
    /// Training data of the ensemble.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    /// Fixed maximum number of rules.
    #[arg(long, conflicts_with = "ell_range", value_parser = clap::value_parser!(u64).range(1..))]
    pub ell: Option<u64>,
    /// `auto` or `lo:hi`; the cap is chosen by validation within the range.
    #[arg(long)]
    pub ell_range: Option<String>,
    /// Weight of stability against loss, in [0, 1].
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Minimum coverage of a candidate rule, as a fraction of the data.
    #[arg(long)]
    pub nmin: Option<f64>,
    #[arg(long)]
    pub budget_seconds: Option<f64>,
    #[arg(long)]
    pub budget_nodes: Option<usize>,
    /// Use k-fold cross-validation when choosing the cap.
    #[arg(long)]
    pub cv_folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the extraction report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, value_enum)]
    pub format: Option<ReportFormat>,
}

#[derive(Args, Debug)]
pub struct FidelityArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub ensemble: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    /// Share of features counted as important.
    #[arg(long)]
    pub top_fraction: Option<f64>,
    #[arg(long, value_enum)]
    pub format: Option<ReportFormat>,
}

#[derive(Args, Debug)]
pub struct ShowArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<ShowFormat>,
}

pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => Config::load(path).map_err(|e| CliError::Usage(format!("{e:#}")))?,
        None => Config::default(),
    };
    let threads = match cli.threads {
        Some(t) => Some(t),
        None => config.get::<usize>("", "threads").map_err(CliError::Usage)?,
    };
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    match cli.command {
        Command::Train(a) => commands::train(a, &config),
        Command::Extract(a) => commands::extract(a, &config),
        Command::Evaluate(a) => commands::evaluate(a, &config),
        Command::Fidelity(a) => commands::fidelity(a, &config),
        Command::Show(a) => commands::show(a, &config),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run with --help for usage");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
