//! `storylens`: run the analysis pipeline stage by stage.
//!
//! Each subcommand reads the artifacts of earlier stages from the work
//! directory and writes its own, so any stage can be rerun on its own.

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod artifacts;
mod config;
mod stages;

use config::Config;

#[derive(Debug)]
pub struct CliError(pub String);

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

macro_rules! cli_error_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError(e.to_string())
            }
        }
    )*};
}

cli_error_from!(
    storylens::Error,
    storylens_genclient::GenError,
    std::io::Error,
    csv::Error,
    serde_json::Error
);

#[derive(Debug, Parser)]
#[command(name = "storylens", version, about = "Point-of-view and protagonist portrayal analysis for story corpora")]
struct Cli {
    /// Pipeline configuration (TOML). Defaults to ./storylens.toml when present.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override the configured work directory.
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// Override the configured root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load the configured corpus files into the work directory.
    Ingest(IngestArgs),
    /// Convert WritingPrompts source/target files to corpus JSONL.
    Convert(ConvertArgs),
    /// Generate machine stories for the ingested prompts.
    Generate(GenerateArgs),
    /// Select protagonists and label each story's point of view.
    Pov,
    /// Extract protagonist attribute tokens.
    Attrs,
    /// Score attributes on every configured dimension, then z-score.
    Score(ScoreArgs),
    /// Evaluate a scorer against held-out lexicon terms.
    Evaluate(EvaluateArgs),
    /// Per-group means and human-vs-machine significance tests.
    AnalyzeGroups(AnalyzeArgs),
    /// Prompt-level human-minus-machine differences and the human control.
    AnalyzePrompts(AnalyzePromptsArgs),
    /// Descriptive corpus statistics per writer group.
    Stats,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Extra input as PATH or PATH:WRITER (added to the configured inputs).
    #[arg(long = "input")]
    pub inputs: Vec<String>,
    /// Fail on the first malformed line.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, default_value = "human")]
    pub writer: String,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub n_per_prompt: Option<u32>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Output JSONL (default: the configured file inside the work directory).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// `default` or `full`.
    #[arg(long)]
    pub plan: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// valence, arousal, dominance or all.
    #[arg(long, default_value = "all")]
    pub dimension: String,
    /// emb_sim, axis_emb or all.
    #[arg(long, default_value = "all")]
    pub method: String,
    #[arg(long)]
    pub train_ratio: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// `z` or `raw`.
    #[arg(long)]
    pub value: Option<String>,
}

#[derive(Debug, Args)]
pub struct AnalyzePromptsArgs {
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub value: Option<String>,
}

fn load_config(cli: &Cli) -> Result<Config, CliError> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => {
            let default = PathBuf::from("storylens.toml");
            if default.is_file() {
                Config::load(&default)?
            } else {
                Config::default()
            }
        }
    };
    if let Some(w) = &cli.workdir {
        config.workdir = w.clone();
    }
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::Convert(args) = &cli.command {
        return stages::convert(args);
    }
    let config = load_config(&cli)?;
    let workdir = artifacts::Workdir::new(config.workdir.clone())?;
    match &cli.command {
        Command::Ingest(args) => stages::ingest(&config, &workdir, args),
        Command::Convert(_) => unreachable!("handled above"),
        Command::Generate(args) => stages::generate(&config, &workdir, args),
        Command::Pov => stages::pov(&config, &workdir),
        Command::Attrs => stages::attrs(&config, &workdir),
        Command::Score(args) => stages::score(&config, &workdir, args),
        Command::Evaluate(args) => stages::evaluate(&config, &workdir, args),
        Command::AnalyzeGroups(args) => stages::analyze_groups(&config, &workdir, args),
        Command::AnalyzePrompts(args) => stages::analyze_prompts(&config, &workdir, args),
        Command::Stats => stages::stats(&config, &workdir),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
