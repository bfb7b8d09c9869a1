//! `hintrank` command-line front end.
//!
//! Every failure prints a single JSON object on stderr with an `error` kind,
//! a `message`, and the process `exit_code`.

mod commands;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hintrank::datastore::{DatastoreError, Scenario, Selection};
use hintrank::eval::EvalError;
use hintrank::gateway::GatewayError;
use hintrank::hint_catalog::CatalogError;
use hintrank::scorer::{ScorerError, TrainingMode};
use hintrank::trainer::TrainError;
use std::ffi::OsString;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "hintrank", version, about = "Learned hint-set selection for query plans")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute every query under every hint set and append records.
    Collect(CollectArgs),
    /// Partition a dataset into train and test queries.
    Split(SplitArgs),
    /// Train a scorer checkpoint.
    Train(TrainArgs),
    /// Print the scored candidates of one query.
    Rank(RankArgs),
    /// Evaluate a checkpoint on the test queries of a split.
    Evaluate(EvaluateArgs),
    /// Singular-value spectrum of plan embeddings.
    Spectrum(SpectrumArgs),
    /// Plan-tree statistics of a dataset.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Record file (one JSON record per line).
    #[arg(long)]
    pub data: PathBuf,
    /// Catalog JSON file, or the built-in `default` (49 sets) or `synthetic` (8 sets).
    #[arg(long, default_value = "default")]
    pub catalog: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceKind {
    Live,
    Replay,
    Synthetic,
}

#[derive(Debug, Args)]
pub struct CollectArgs {
    #[arg(long, value_enum, default_value = "live")]
    pub source: SourceKind,
    /// Query file: one `{"query_id","template_id","sql"}` object per line.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long, default_value = "default")]
    pub catalog: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Failure manifest; defaults to `<out>.failures.jsonl`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Recorded dataset served by `--source replay`.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    #[arg(long, default_value = "localhost")]
    pub db_host: String,
    #[arg(long, default_value_t = 5432)]
    pub db_port: u16,
    #[arg(long, default_value = "postgres")]
    pub db_name: String,
    #[arg(long, default_value = "postgres")]
    pub db_user: String,
    /// Environment variable holding the database password.
    #[arg(long, default_value = "PGPASSWORD")]
    pub db_password_env: String,
    #[arg(long, default_value_t = 300_000)]
    pub timeout_ms: u64,
    #[arg(long, default_value_t = 1)]
    pub repetitions: u32,
    #[arg(long, default_value = "RESET ALL")]
    pub reset_statement: String,
    /// Synthetic workload size.
    #[arg(long, default_value_t = 60)]
    pub templates: usize,
    #[arg(long, default_value_t = 10)]
    pub queries_per_template: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_parser = parse_from_str::<Scenario>)]
    pub scenario: Scenario,
    #[arg(long, value_parser = parse_from_str::<Selection>)]
    pub selection: Selection,
    #[arg(long)]
    pub holdout: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Train only on the split's training queries.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_parser = parse_from_str::<TrainingMode>)]
    pub mode: Option<TrainingMode>,
    /// Training config JSON; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Training report; defaults to `<out>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub query_id: String,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Without a split, every query is evaluated.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// JSON report path.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Aligned text report path.
    #[arg(long)]
    pub text: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Population {
    Train,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    pub population: Population,
    /// CSV output (`k,sigma,log10_sigma`).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn parse_from_str<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T, String> {
    s.parse()
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DatastoreError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("checkpoint was trained against catalog {checkpoint}, but the active catalog hashes to {active}")]
    CatalogMismatch { checkpoint: String, active: String },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Checkpoint(#[from] ScorerError),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "UsageError",
            CliError::Io { .. } => "IoError",
            CliError::Data(DatastoreError::Io { .. }) => "IoError",
            CliError::Data(_) => "DataError",
            CliError::Catalog(_) => "CatalogError",
            CliError::CatalogMismatch { .. } => "CatalogMismatch",
            CliError::Train(_) => "TrainError",
            CliError::Eval(_) => "EvalError",
            CliError::Gateway(_) => "GatewayError",
            CliError::Checkpoint(ScorerError::Io(_)) => "IoError",
            CliError::Checkpoint(_) => "CheckpointError",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "UsageError" => 2,
            "IoError" => 3,
            "DataError" => 4,
            "CatalogError" => 5,
            "CatalogMismatch" => 6,
            "TrainError" => 7,
            "EvalError" => 8,
            "GatewayError" => 9,
            _ => 10,
        }
    }

    fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = CliError::Usage(e.render().to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
