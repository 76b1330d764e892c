//! `veritrace`: build, run and score verifiable-trace QA experiments.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "veritrace", version, about = "Verifiable reasoning traces for open-book QA")]
struct Cli {
    /// INI run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Dataset kind: cotemp, marco, babi or custom.
    #[arg(long)]
    dataset: Option<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SourceFormat {
    Jsonl,
    Babi,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a corpus into canonical instances.jsonl.
    Ingest(IngestArgs),
    /// Write gold skeletons and the temporal cross-check.
    Decompose(DecomposeArgs),
    /// Export an SFT dataset in vanilla, correct or incorrect trace mode.
    BuildSft(BuildSftArgs),
    /// Collect completions from an endpoint, or replay gold/oracle ones.
    Infer(InferArgs),
    /// Score completions against the gold decomposition.
    Eval(EvalArgs),
    /// Aggregate evaluations into metric tables and confusion matrices.
    Report(ReportArgs),
    /// Check the reference solver against the gold answers.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    common: Common,
    /// Corpus file: canonical JSONL or a bAbI story file.
    #[arg(long, required_unless_present = "synthetic_cotemp", conflicts_with = "synthetic_cotemp")]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: SourceFormat,
    /// bAbI task label, e.g. single-supporting-fact.
    #[arg(long)]
    task: Option<String>,
    /// Skip invalid JSONL lines instead of failing.
    #[arg(long)]
    lenient: bool,
    /// Generate N synthetic co-temporal instances instead of reading input.
    #[arg(long, value_name = "N")]
    synthetic_cotemp: Option<usize>,
    /// Seed for the synthetic generator.
    #[arg(long, requires = "synthetic_cotemp")]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[command(flatten)]
    common: Common,
    /// Canonical instances JSONL.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildSftArgs {
    #[command(flatten)]
    common: Common,
    /// Canonical instances JSONL.
    #[arg(long)]
    input: PathBuf,
    /// vanilla, correct or incorrect.
    #[arg(long)]
    mode: String,
    /// Corruption seed; required for incorrect mode.
    #[arg(long)]
    seed: Option<u64>,
    /// Keep the gold category in incorrect traces.
    #[arg(long)]
    keep_category: bool,
    /// Keep the gold facts in incorrect traces.
    #[arg(long)]
    keep_facts: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Replay {
    /// Echo each record's own completion.
    Gold,
    /// Render the gold trace with the reference solver's answers.
    Oracle,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    common: Common,
    /// SFT records whose prompts are sent.
    #[arg(long)]
    input: PathBuf,
    /// Server root; requests go to <base-url>/v1/chat/completions.
    #[arg(long)]
    base_url: Option<String>,
    /// Model name sent with every request.
    #[arg(long)]
    model: Option<String>,
    /// Upper bound on concurrent requests.
    #[arg(long)]
    max_in_flight: Option<usize>,
    /// Retries per record on 429 and 5xx responses.
    #[arg(long)]
    max_retries: Option<u32>,
    /// Cache directory; defaults to <out>/cache.
    #[arg(long, value_name = "DIR")]
    cache: Option<PathBuf>,
    /// Produce completions offline instead of calling an endpoint.
    #[arg(long, value_enum)]
    replay: Option<Replay>,
    /// Instances, needed by oracle replay.
    #[arg(long)]
    instances: Option<PathBuf>,
    /// Suffix for output names, e.g. outputs.<tag>.jsonl.
    #[arg(long)]
    tag: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Canonical instances JSONL the outputs answer.
    #[arg(long)]
    instances: PathBuf,
    /// Model-output JSONL with `id` and `completion`.
    #[arg(long)]
    outputs: PathBuf,
    /// Suffix for output names, e.g. eval.<tag>.jsonl.
    #[arg(long)]
    tag: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    common: Common,
    /// MODEL:SETTING:EVAL_JSONL, repeatable. Settings: prompt, sft-vanilla,
    /// sft-correct-trace, sft-incorrect-trace.
    #[arg(long = "run", value_name = "MODEL:SETTING:PATH", required = true)]
    runs: Vec<String>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    common: Common,
    /// Canonical instances JSONL.
    #[arg(long)]
    input: PathBuf,
}

impl Common {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(d) = &self.dataset {
            cfg.dataset.kind = Some(d.clone());
        }
        if let Some(o) = &self.out {
            cfg.output.dir = Some(o.clone());
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Ingest(a) => commands::ingest(a, &mut cfg),
        Command::Decompose(a) => commands::decompose(a, &mut cfg),
        Command::BuildSft(a) => commands::build_sft(a, &mut cfg),
        Command::Infer(a) => commands::infer(a, &mut cfg),
        Command::Eval(a) => commands::eval(a, &mut cfg),
        Command::Report(a) => commands::report(a, &mut cfg),
        Command::OracleCheck(a) => commands::oracle_check(a, &mut cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let err = CliError::Usage(e.kind().to_string());
            eprintln!("{}", err.summary());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            eprintln!("{}", err.summary());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
