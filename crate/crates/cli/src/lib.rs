//! The `nl2code` command line: corpus tools, training, translation,
//! evaluation and pipeline inspection.

use std::io::{BufRead, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use nl2code_core::Lang;

pub mod commands;
pub mod config;
pub mod exit;

pub use commands::{
    cmd_eval, cmd_generate, cmd_parse_intent, cmd_pretrain, cmd_split, cmd_stats, cmd_train, cmd_translate, stats_table,
    TrainOutcome, EVAL_JSON_FILE, EVAL_TABLE_FILE, TRAIN_LOG_FILE,
};
pub use config::{ModelKind, Overrides, RunConfig};
pub use exit::{exit_code, CliResult};

#[derive(Debug, Parser)]
#[command(name = "nl2code", version, about = "Translate English intents into Python or IA-32 assembly")]
pub struct Cli {
    /// Log progress at info level.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Corpus statistics.
    Stats(StatsArgs),
    /// Write a synthetic corpus.
    Generate(GenerateArgs),
    /// Split a corpus into train/dev/test files by program.
    Split(SplitArgs),
    /// Train a model from a run config.
    Train(TrainArgs),
    /// Pre-train a transformer with MLM and replaced-token detection.
    Pretrain(TrainArgs),
    /// Translate intents with a trained model.
    Translate(TranslateArgs),
    /// Score a model on a test corpus.
    Eval(EvalArgs),
    /// Show every intent pipeline stage for one intent.
    ParseIntent(ParseIntentArgs),
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    pub corpus: PathBuf,
    #[arg(long)]
    pub lang: Lang,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub lang: Lang,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SplitArgs {
    pub corpus: PathBuf,
    #[arg(long)]
    pub lang: Lang,
    /// Comma-separated program ids held out for testing.
    #[arg(long, value_delimiter = ',')]
    pub test_programs: Vec<String>,
    #[arg(long, default_value_t = 0.0)]
    pub dev_fraction: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub lang: Option<Lang>,
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TranslateArgs {
    /// Directory holding model.ckpt and model.json.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Intent file, one per line; standard input when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Interactive prompt instead of batch mode.
    #[arg(long)]
    pub repl: bool,
    #[arg(long)]
    pub beam: Option<usize>,
    /// Expected model language; a different one is a mismatch.
    #[arg(long)]
    pub lang: Option<Lang>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// `builtin` or `external:"CMD {file}"`.
    #[arg(long, default_value = "builtin")]
    pub checker: String,
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long)]
    pub lang: Option<Lang>,
    #[arg(long, default_value = "eval")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ParseIntentArgs {
    pub intent: String,
    #[arg(long)]
    pub lang: Lang,
    /// Take lexicon files from this run config.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Runs one command against the given streams.
pub fn run(cli: Cli, input: &mut dyn BufRead, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Stats(a) => cmd_stats(&a, out),
        Command::Generate(a) => cmd_generate(&a, out),
        Command::Split(a) => cmd_split(&a, out),
        Command::Train(a) => cmd_train(&a).and_then(|o| o.report(out)),
        Command::Pretrain(a) => cmd_pretrain(&a).and_then(|o| o.report(out)),
        Command::Translate(a) => cmd_translate(&a, input, out),
        Command::Eval(a) => cmd_eval(&a, out).map(drop),
        Command::ParseIntent(a) => cmd_parse_intent(&a, out),
    }
}
