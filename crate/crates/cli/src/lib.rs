//! `parabench`: synthetic data generation, dual-encoder training, retrieval,
//! evaluation and the strategy comparison, behind one binary.
//!
//! Every command returns its stdout text so the whole surface can be driven
//! in-process; `main` only maps errors to exit codes.

pub mod commands;
pub mod error;
pub mod format;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use parabench_core::BenchmarkKind;
use parabench_duotower::Strategy;

pub use error::{CliError, CliResult};
pub use format::Format;

#[derive(Debug, Parser)]
#[command(name = "parabench", version, about = "Paraphrase-consistency benchmarks for dual encoders")]
pub struct Cli {
    /// Worker threads for parallel evaluation; results do not depend on it.
    #[arg(long, global = true, env = "PARABENCH_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic benchmark and its reference manifests.
    Synth(SynthArgs),
    /// Pretrain the text base and train one dual encoder.
    Train(TrainArgs),
    /// Exact cosine top-k for every query row, as JSON lines.
    Retrieve(RetrieveArgs),
    /// Evaluate a benchmark manifest.
    Eval(EvalArgs),
    /// Fuse each query with its expansion rows by averaging.
    Expand(ExpandArgs),
    /// Compare adaptation strategies over several seeds.
    Experiment(ExperimentArgs),
    /// Check a manifest without evaluating it.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON synthetic-data config; omitted fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON experiment config; omitted fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to the first configured strategy.
    #[arg(long)]
    pub strategy: Option<Strategy>,
    /// Defaults to the first configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub gallery: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    /// JSONL destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Must match the manifest kind when given.
    #[arg(long, value_parser = parse_kind)]
    pub kind: Option<BenchmarkKind>,
    /// Depths to evaluate; repeat or comma-separate.
    #[arg(long, value_delimiter = ',', default_value = "10", value_parser = clap::value_parser!(u64).range(1..))]
    pub k: Vec<u64>,
    /// Directory for `report.json`, `metrics.csv` and per-item CSVs.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    #[arg(long)]
    pub queries: PathBuf,
    /// `K` rows per query, query-major.
    #[arg(long)]
    pub expansions: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// JSON experiment config; omitted fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the configured seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Overrides the configured strategies.
    #[arg(long, value_delimiter = ',')]
    pub strategies: Option<Vec<Strategy>>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

fn parse_kind(s: &str) -> Result<BenchmarkKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown kind `{s}`; expected paraphrase, retrieval, classification or sts"))
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, S>(args: I) -> CliResult<String>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    run(cli)
}

pub fn run(cli: Cli) -> CliResult<String> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Train(a) => commands::train(&a),
        Command::Retrieve(a) => commands::retrieve(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Expand(a) => commands::expand(&a),
        Command::Experiment(a) => commands::experiment(&a),
        Command::Validate(a) => commands::validate(&a),
    })
}
