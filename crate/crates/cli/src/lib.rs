//! `augbench` command-line front end.

pub mod commands;
pub mod config;
pub mod error;
pub mod files;
pub mod grid;
pub mod synth;
pub mod transport;

use std::path::PathBuf;

use augbench_core::corpus::IngestFormat;
use augbench_core::generator::DEFAULT_SEPARATOR;
use augbench_core::{BasicStrategy, FineTuneStrategy, TruncationMode};
use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "augbench", version, about = "Truncate, augment and evaluate imbalanced text classification data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read a corpus in a supported layout and write canonical JSONL.
    Ingest(IngestArgs),
    /// Stratified train/test split.
    Split(SplitArgs),
    /// Keep a seeded fraction of the data.
    Truncate(TruncateArgs),
    /// Refill classes with basic edit-based augmentation.
    Augment(AugmentArgs),
    /// Build the fine-tune set and submit a fine-tune job.
    Finetune(FinetuneArgs),
    /// Sample completions from a fine-tuned model.
    Generate(GenerateArgs),
    /// Token count and cost of a fine-tune upload file.
    EstimateCost(EstimateCostArgs),
    /// Fit a classifier and save it as JSON.
    Train(TrainArgs),
    /// Score a saved classifier on a labeled dataset.
    Evaluate(EvaluateArgs),
    /// Run a strategy × retention grid from a config file.
    Grid(GridArgs),
    /// Print the summary of an emitted grid report.
    Report(ReportArgs),
    /// Write a synthetic spam/ham task with resources and a sample config.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct SchemaArg {
    /// Class schema as TOML or JSON.
    #[arg(long)]
    pub schema: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub format: IngestFormat,
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub schema: SchemaArg,
    /// Defaults to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub schema: SchemaArg,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub train_out: PathBuf,
    #[arg(long)]
    pub test_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TruncateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub schema: SchemaArg,
    #[arg(long)]
    pub retention: f64,
    #[arg(long, default_value = "disp")]
    pub mode: TruncationMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub schema: SchemaArg,
    #[arg(long)]
    pub strategy: BasicStrategy,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Per-class target as CLASS=COUNT; repeatable.
    #[arg(long = "target", value_parser = parse_target)]
    pub targets: Vec<(String, usize)>,
    /// Untruncated dataset whose class counts set the targets.
    #[arg(long, conflicts_with = "targets")]
    pub reference: Option<PathBuf>,
    /// Share of the gap to `--reference` that gets refilled.
    #[arg(long, default_value_t = 1.0)]
    pub refill_fraction: f64,
    /// Edit policy as TOML or JSON.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_target(s: &str) -> Result<(String, usize), String> {
    let (class, count) = s.split_once('=').ok_or_else(|| format!("expected CLASS=COUNT, got `{s}`"))?;
    let count = count.parse().map_err(|e| format!("bad count in `{s}`: {e}"))?;
    Ok((class.to_string(), count))
}

#[derive(Debug, Args)]
pub struct TransportArgs {
    #[arg(long, value_enum, default_value = "http")]
    pub backend: config::Backend,
    #[arg(long, value_enum, default_value = "direct")]
    pub mode: config::TransportMode,
    #[arg(long)]
    pub cassette: Option<PathBuf>,
    /// Template grammar JSON for the mock backend.
    #[arg(long)]
    pub grammar: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub mock_seed: u64,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// Truncated training set.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub schema: SchemaArg,
    #[arg(long)]
    pub strategy: FineTuneStrategy,
    /// Retention the input was truncated at; gen2 needs it.
    #[arg(long, default_value_t = 1.0)]
    pub retention: f64,
    #[arg(long, default_value_t = 0)]
    pub truncation_seed: u64,
    #[arg(long, default_value = DEFAULT_SEPARATOR)]
    pub separator: String,
    /// Defaults to `AUGBENCH_ENGINE`, then the built-in engine.
    #[arg(long)]
    pub engine: Option<String>,
    #[arg(long, default_value_t = 4)]
    pub epochs: u32,
    #[arg(long, default_value = "0.003")]
    pub rate: rust_decimal::Decimal,
    #[arg(long, default_value_t = 10_000)]
    pub poll_interval_ms: u64,
    #[command(flatten)]
    pub transport: TransportArgs,
    /// Print the cost estimate and exit without contacting the endpoint.
    #[arg(long)]
    pub dry_run: bool,
    /// Also write the upload JSONL here.
    #[arg(long)]
    pub export: Option<PathBuf>,
    /// Write the job handle JSON here instead of stdout.
    #[arg(long)]
    pub handle_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub schema: SchemaArg,
    #[arg(long)]
    pub model: String,
    /// Leaf class to prompt for.
    #[arg(long)]
    pub class: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0.8)]
    pub temperature: f64,
    #[arg(long, default_value_t = 64)]
    pub max_tokens: u32,
    #[arg(long, default_value_t = 16)]
    pub samples_per_request: u32,
    #[arg(long, default_value = DEFAULT_SEPARATOR)]
    pub separator: String,
    #[arg(long, default_value = "0.012")]
    pub rate: rust_decimal::Decimal,
    #[command(flatten)]
    pub transport: TransportArgs,
    /// Post-process against this fine-tune input set and write samples.
    #[arg(long, requires = "strategy")]
    pub postprocess_against: Option<PathBuf>,
    #[arg(long)]
    pub strategy: Option<FineTuneStrategy>,
    #[arg(long)]
    pub dry_run: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateCostArgs {
    /// Line-delimited `{"prompt", "completion"}` records.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "0.003")]
    pub rate: rust_decimal::Decimal,
    #[arg(long, default_value_t = 4)]
    pub epochs: u32,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub schema: SchemaArg,
    /// `mnb`, `logreg` or `knn`, or a TOML/JSON classifier spec file.
    #[arg(long, default_value = "mnb")]
    pub classifier: String,
    #[arg(long, default_value_t = 1)]
    pub min_df: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Saved classifier from `train`.
    #[arg(long, required_unless_present = "train", conflicts_with = "train")]
    pub model: Option<PathBuf>,
    /// Fit on this set instead of loading `--model`; works with external
    /// adapters too.
    #[arg(long, requires = "classifier")]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub classifier: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub min_df: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub schema: SchemaArg,
    /// Write `{"id", "label"}` predictions here.
    #[arg(long)]
    pub predictions_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub master_seed: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<config::TransportMode>,
    #[arg(long)]
    pub cassette: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 11)]
    pub seed: u64,
    #[arg(long, default_value_t = 5000)]
    pub train_negative: usize,
    #[arg(long, default_value_t = 700)]
    pub train_positive: usize,
    #[arg(long, default_value_t = 1316)]
    pub test_negative: usize,
    #[arg(long, default_value_t = 184)]
    pub test_positive: usize,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Split(a) => commands::split(a),
        Command::Truncate(a) => commands::truncate(a),
        Command::Augment(a) => commands::augment(a),
        Command::Finetune(a) => commands::finetune(a),
        Command::Generate(a) => commands::generate(a),
        Command::EstimateCost(a) => commands::estimate_cost(a),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Grid(a) => grid::grid(a),
        Command::Report(a) => grid::report(a),
        Command::Synth(a) => synth::synth(a),
    }
}
