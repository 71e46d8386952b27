//! Command-line front end: `learn`, `explain`, `bench`, `validate` and `gen`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 model adapter failure,
//! 4 instance not adverse, 5 no counterfactual found.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod recommend;

pub use recommend::recommendation;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ADAPTER: i32 = 3;
pub const EXIT_NOT_ADVERSE: i32 = 4;
pub const EXIT_NO_COUNTERFACTUAL: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "recourse",
    version,
    about = "Causally consistent minimal-cost counterfactuals"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn decision rules that mimic a model and report their fidelity.
    Learn(LearnArgs),
    /// Find the cheapest counterfactuals for one instance.
    Explain(ExplainArgs),
    /// Benchmark nearest counterfactual distances over many instances.
    Bench(BenchArgs),
    /// Check a schema, decision rules and causal rules for consistency.
    Validate(ValidateArgs),
    /// Write a synthetic world as a file bundle.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    L0,
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CandidatesArg {
    Dataset,
    Grid,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Mc3g,
    Standard,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WorldArg {
    Loan,
    Adult,
    German,
    Cars,
    Random,
}

/// Inputs shared by every command that reads a dataset and a model.
#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Dataset CSV; a trailing `label` column is read as recorded labels.
    #[arg(long)]
    pub data: PathBuf,
    /// Schema JSON.
    #[arg(long)]
    pub schema: PathBuf,
    /// `rules:<path>`, `exec:<command>` or `preds:<path>`. Without it the
    /// dataset's `label` column is used.
    #[arg(long)]
    pub model: Option<String>,
    /// Undesired class label (taken from the rule file for rule models).
    #[arg(long)]
    pub undesired: Option<String>,
    /// Favorable class label.
    #[arg(long)]
    pub favorable: Option<String>,
    /// Maximum nesting of exceptions in learned rules.
    #[arg(long, default_value_t = 2)]
    pub max_exception_depth: usize,
    /// Seconds to wait for a subprocess model per batch.
    #[arg(long, default_value_t = 30)]
    pub timeout: u64,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Causal rules JSON; no causal rules when omitted.
    #[arg(long)]
    pub causal: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', num_args = 1.., default_values_t = [NormArg::L0])]
    pub norm: Vec<NormArg>,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = CandidatesArg::Dataset)]
    pub candidates: CandidatesArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Mc3g)]
    pub mode: ModeArg,
    /// Largest rule grid accepted before giving up.
    #[arg(long, default_value_t = recourse_core::search::DEFAULT_GRID_CAP)]
    pub grid_cap: u128,
    /// Worker threads for candidate evaluation (0: one per core).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output directory for `rules.txt` and `fidelity.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Zero-based dataset row to explain.
    #[arg(long, conflicts_with = "instance")]
    pub row: Option<usize>,
    /// Instance values, comma-separated in schema order.
    #[arg(long)]
    pub instance: Option<String>,
    /// Also write the result JSON to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Output directory for `report.json` and `report.csv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Benchmark a seeded random subset of this many adverse rows.
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dataset name used in the report.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub schema: PathBuf,
    /// Decision rule file.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long)]
    pub causal: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub world: WorldArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of rows (ignored for the loan and cars worlds).
    #[arg(long, default_value_t = 500)]
    pub rows: usize,
}

/// A failure with its exit code and a message for the error stream.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<recourse_core::Error> for Failure {
    fn from(e: recourse_core::Error) -> Self {
        use recourse_core::Error as E;
        let code = match &e {
            E::BlackBoxFailure { .. }
            | E::Protocol(_)
            | E::MissingPrediction(_)
            | E::Timeout(_) => EXIT_ADAPTER,
            E::NotAdverse => EXIT_NOT_ADVERSE,
            _ => EXIT_CONFIG,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = if code == EXIT_OK {
                write!(out, "{e}")
            } else {
                write!(err, "{e}")
            };
            return code;
        }
    };
    match commands::dispatch(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}
