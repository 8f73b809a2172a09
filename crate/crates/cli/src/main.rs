//! Command line around the elimination pipeline: one-off questions, dataset
//! benchmarks, the error-propagation simulator, and a parajumble generator.
//!
//! Exit codes: 0 on success, 1 for usage problems (bad flags, bad config,
//! unknown names), 2 when a run itself fails (backend trouble, IO).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use config::CliError;

#[derive(Parser)]
#[command(
    name = "exclusion",
    version,
    about = "Answer questions by eliminating candidates whose premises contradict the context",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer one question and show how it was reached.
    Ask(AskArgs),
    /// Run strategies over a JSONL dataset and write a report.
    Bench(BenchArgs),
    /// Compare chained-step and per-candidate-check error propagation.
    SimulateErrors(SimulateArgs),
    /// Turn paragraphs into a shuffled sentence-ordering dataset.
    MakeParajumble(MakeArgs),
}

/// Flags shared by the model-calling subcommands. Precedence everywhere:
/// flag, then environment, then config file, then the built-in default.
#[derive(Args)]
struct CommonFlags {
    /// JSON config file; flags and environment override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Backend selector: live:<url> or scripted:<path>.
    #[arg(long, value_name = "SELECTOR")]
    backend: Option<String>,

    /// Separate backend for entailment judging.
    #[arg(long, value_name = "SELECTOR")]
    judge_backend: Option<String>,

    /// Model id sent with every request.
    #[arg(long)]
    model: Option<String>,

    /// Content-addressed response cache; omit to skip caching.
    #[arg(long, value_name = "DIR")]
    cache_dir: Option<PathBuf>,

    /// Directory of prompt template overrides.
    #[arg(long, value_name = "DIR")]
    template_dir: Option<PathBuf>,

    /// Candidates requested from a planning call.
    #[arg(long)]
    k: Option<usize>,

    /// Premises judged per candidate; extras are truncated.
    #[arg(long)]
    max_premises: Option<usize>,

    /// Exemplar pairs prepended to answering calls.
    #[arg(long)]
    shots: Option<usize>,

    /// Sampling temperature for answering calls.
    #[arg(long)]
    temperature: Option<f64>,

    /// Completion budget per call.
    #[arg(long)]
    max_tokens: Option<u32>,

    /// Seed for shuffling, selection, and exemplar picks.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct AskArgs {
    /// The question to answer.
    question: String,

    /// Task shape: multiple_choice, boolean, ordering, or free_form.
    #[arg(long, default_value = "free_form")]
    task: String,

    /// Supporting passage shown before the question.
    #[arg(long)]
    context: Option<String>,

    /// Answer option as LABEL=TEXT; repeat once per option.
    #[arg(long = "option", value_name = "LABEL=TEXT")]
    options: Vec<String>,

    /// Strategy to run: standard, cot, iep, or iep-cot.
    #[arg(long, default_value = "iep")]
    strategy: String,

    /// Write the full reasoning trace as JSON.
    #[arg(long, value_name = "FILE")]
    trace_out: Option<PathBuf>,

    #[command(flatten)]
    common: CommonFlags,
}

#[derive(Args)]
struct BenchArgs {
    /// JSONL dataset of problems.
    #[arg(long, value_name = "FILE")]
    dataset: Option<PathBuf>,

    /// Strategies to run, comma separated.
    #[arg(long, value_delimiter = ',', value_name = "NAME,...")]
    strategy: Vec<String>,

    /// Shuffle problems before any limit cut.
    #[arg(long)]
    shuffle: bool,

    /// Evaluate at most this many problems.
    #[arg(long)]
    limit: Option<usize>,

    /// Worker threads; 1 keeps call order strictly sequential.
    #[arg(long)]
    concurrency: Option<usize>,

    /// Consecutive transport failures that abort the run.
    #[arg(long)]
    abort_after: Option<u32>,

    /// Root directory for run artifacts.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    #[command(flatten)]
    common: CommonFlags,
}

#[derive(Args)]
struct SimulateArgs {
    /// Chain length in steps; the opening step is taken as given.
    #[arg(long, default_value_t = 6)]
    steps: usize,

    /// Per-step error rates to sweep, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1])]
    error: Vec<f64>,

    /// Monte Carlo trials per table cell.
    #[arg(long, default_value_t = 100_000)]
    trials: u64,

    /// RNG seed; the whole table is reproducible from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Previous steps each step conditions on (capped at the row's length).
    #[arg(long, default_value_t = 1)]
    window: usize,

    /// Also sweep elimination over this many candidate answers.
    #[arg(long)]
    candidates: Option<usize>,

    /// Verification checks per candidate in the elimination sweep.
    #[arg(long, default_value_t = 2)]
    checks: usize,

    /// Emit CSV instead of an aligned table.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct MakeArgs {
    /// Plain text: paragraphs separated by blank lines, one sentence per line.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,

    /// Output JSONL path; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,

    /// Seed for the per-paragraph shuffles.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Problem id prefix; ids run <prefix>-0001, <prefix>-0002, ...
    #[arg(long, default_value = "pj")]
    id_prefix: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version go to stdout and succeed; everything else is
            // a usage error. clap's own exit code (2) is reserved here for
            // run failures, so map parse errors to 1 by hand.
            let ok = matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = err.print();
            return if ok { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    let result = match cli.command {
        Command::Ask(args) => commands::ask(args),
        Command::Bench(args) => commands::bench(args),
        Command::SimulateErrors(args) => commands::simulate_errors(args),
        Command::MakeParajumble(args) => commands::make_parajumble(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage { message, command }) => {
            eprintln!("error: {message}");
            eprintln!();
            eprintln!("{}", usage_for(command));
            ExitCode::from(1)
        }
        Err(CliError::Run(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

/// The synopsis line for one subcommand, for usage-error messages.
fn usage_for(subcommand: &str) -> String {
    let mut root = Cli::command();
    match root.find_subcommand_mut(subcommand) {
        // An unparsed subcommand renders bare; restore the binary prefix.
        Some(cmd) => cmd
            .render_usage()
            .to_string()
            .replacen("Usage: ", "Usage: exclusion ", 1),
        None => root.render_usage().to_string(),
    }
}
