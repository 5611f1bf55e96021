//! `specroof` command-line front end.
//!
//! Exit codes: 0 on success (flagged results included), 1 for user errors
//! (bad arguments, unreadable or invalid inputs), 2 when a library
//! invariant breaks.

mod commands;
mod ranges;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "specroof", version, about = "Roofline planning and simulation for tree-based speculative decoding")]
struct Cli {
    /// Write the report to this file instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per-operator cycle workload and its roofline point.
    Analyze(AnalyzeArgs),
    /// Tree size that puts a cycle at the roofline knee.
    Plan(PlanArgs),
    /// Fit a scaling law to an `x,y` CSV.
    Fit(FitArgs),
    /// Run draft-and-verify decoding over toy Markov models.
    Simulate(SimulateArgs),
    /// Emit throughput curves or the acceptance interplay table as CSV.
    Sweep(SweepArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Human,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitFormat {
    Json,
    Human,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepKind {
    TopkCurve,
    Interplay,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Greedy,
    Sampled,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    #[arg(long, value_name = "PATH")]
    hardware: PathBuf,
    #[arg(long, value_name = "PATH")]
    deploy: PathBuf,
    /// `const:<t_acc>` or `eq8:<scale>`; defaults to the deploy file's t_acc.
    #[arg(long, value_name = "MODEL")]
    acc_model: Option<String>,
    #[arg(long, value_enum, default_value = "human")]
    format: Format,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("batches").required(true).args(["batch", "batch_list"])))]
pub struct PlanArgs {
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    #[arg(long, value_name = "PATH")]
    hardware: PathBuf,
    #[arg(long)]
    batch: Option<u64>,
    /// Comma list or `start:stop:step`.
    #[arg(long, value_name = "LIST")]
    batch_list: Option<String>,
    /// Cached context length s_pre.
    #[arg(long, default_value_t = 0)]
    prefill: u64,
    /// Tokens per drafting step.
    #[arg(long, default_value_t = 10)]
    draft_tokens: u64,
    #[arg(long, value_name = "MODEL", default_value = "eq8:1")]
    acc_model: String,
    #[arg(long, value_enum, default_value = "human")]
    format: Format,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long, value_name = "PATH")]
    csv: PathBuf,
    /// log10, log2 or invsqrt.
    #[arg(long)]
    form: String,
    #[arg(long, value_enum, default_value = "json")]
    format: FitFormat,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_name = "PATH")]
    target: PathBuf,
    #[arg(long, value_name = "PATH")]
    draft: PathBuf,
    #[arg(long, default_value_t = 100)]
    cycles: usize,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, default_value_t = 2)]
    topc: usize,
    /// Node budget (top_k).
    #[arg(long, default_value_t = 16)]
    budget: usize,
    #[arg(long, value_enum, default_value = "greedy")]
    mode: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Prompt tokens, comma or space separated.
    #[arg(long, default_value = "")]
    prefix: String,
    #[arg(long, value_enum, default_value = "human")]
    format: Format,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    what: SweepKind,
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    #[arg(long, value_name = "PATH")]
    hardware: PathBuf,
    /// Template deployment; without it b=1, s_pre=0, k=10, t_acc=1.
    #[arg(long, value_name = "PATH")]
    deploy: Option<PathBuf>,
    /// Batch sizes: comma list or `start:stop:step`.
    #[arg(long, value_name = "LIST")]
    batch: Option<String>,
    /// Tree sizes, `start:stop:step`.
    #[arg(long, value_name = "RANGE")]
    topk: String,
    #[arg(long)]
    prefill: Option<u64>,
    #[arg(long)]
    draft_tokens: Option<u64>,
    /// Curve acceptance model; defaults to the deploy file's t_acc, or
    /// `eq8:1` without one.
    #[arg(long, value_name = "MODEL")]
    acc_model: Option<String>,
    /// Interplay scale factors.
    #[arg(long, value_name = "LIST", default_value = "0.9,1.0,1.1,1.2")]
    kappa: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let report = match &cli.command {
        Command::Analyze(a) => commands::analyze(a),
        Command::Plan(a) => commands::plan(a),
        Command::Fit(a) => commands::fit(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Sweep(a) => commands::sweep(a),
    };
    let written = report.and_then(|text| commands::emit(&text, cli.out.as_deref()));
    match written {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<commands::Internal>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
