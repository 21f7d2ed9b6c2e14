//! `senscap`: sensing-capacity bounds, exponents, sweeps and simulations
//! from the command line.
//!
//! Exit codes: 0 on success, 2 on a configuration error, 1 when a solver
//! fails (an `error.json` with diagnostics is still written), 130 when
//! interrupted (partial CSVs end with a `# truncated` line).

mod commands;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::Failure;

/// Seed used when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 20_070_601;

pub static INTERRUPTED: AtomicBool = AtomicBool::new(false);

pub fn interrupted() -> bool {
    INTERRUPTED.load(Ordering::SeqCst)
}

#[derive(Parser, Debug)]
#[command(name = "senscap", version, about = "Sensing-capacity bounds and Monte Carlo validation for detection sensor networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Lower bound C_LB(D) of one model.
    Bound(BoundArgs),
    /// Random-coding exponent E_r(R, D).
    Exponent(ExponentArgs),
    /// Bound (or exponent) along a parameter axis for one or more models.
    Sweep(SweepArgs),
    /// Monte Carlo error rate versus rate.
    Simulate(SimulateArgs),
    /// Count the vectors in a conditional type class.
    Enumerate(EnumerateArgs),
}

#[derive(Args, Debug)]
pub struct Output {
    /// Directory receiving the artifacts.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Leave the generation time out of SVG files.
    #[arg(long)]
    pub fixed_metadata: bool,
}

#[derive(Args, Debug, Default)]
pub struct SolverArgs {
    /// Bound variant (default: chosen from the model).
    #[arg(long)]
    pub variant: Option<String>,
    /// Grid cells per free coordinate.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Local refinement rounds of the grid solver.
    #[arg(long)]
    pub refinements: Option<usize>,
    /// Width of the final rate bracket of the bisection solver.
    #[arg(long)]
    pub bisection_tol: Option<f64>,
    /// Drop joint shift consistency from the contiguous feasible set.
    #[arg(long)]
    pub no_shift_consistency: bool,
}

#[derive(Args, Debug)]
pub struct BoundArgs {
    /// Model specification (JSON).
    #[arg(long)]
    pub model: PathBuf,
    /// Tolerable distortion D.
    #[arg(long = "distortion", visible_alias = "D")]
    pub distortion: f64,
    /// Also compare against m-fold replication with majority voting.
    #[arg(long)]
    pub replication: Option<usize>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct ExponentArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "distortion", visible_alias = "D")]
    pub distortion: f64,
    /// Rate R = k/n.
    #[arg(long)]
    pub rate: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// One of D, noise_p, c, rate.
    #[arg(long)]
    pub axis: String,
    /// Grid as `from:to:points` (inclusive) or a comma-separated list.
    #[arg(long, conflicts_with_all = ["from", "to", "points"])]
    pub values: Option<String>,
    #[arg(long)]
    pub from: Option<f64>,
    #[arg(long)]
    pub to: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    /// Model files, comma separated.
    #[arg(long, alias = "model", value_delimiter = ',', required = true)]
    pub models: Vec<PathBuf>,
    /// Distortion for the noise_p, c and rate axes.
    #[arg(long = "distortion", visible_alias = "D", default_value_t = 0.1)]
    pub distortion: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DecoderKind {
    Bp,
    Ml,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "distortion", visible_alias = "D")]
    pub distortion: f64,
    /// Target sizes (field side for 2D models), comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub k: Vec<usize>,
    /// Rates as `from:to:points` (inclusive) or a comma-separated list.
    #[arg(long)]
    pub rates: String,
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "bp")]
    pub decoder: DecoderKind,
    /// Belief-propagation iteration cap.
    #[arg(long, default_value_t = 50)]
    pub max_iters: usize,
    /// Belief-propagation damping in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    pub damping: f64,
    /// Stream every trial to trials.ndjson.
    #[arg(long)]
    pub records: bool,
    /// Skip computing the capacity bound shown on the plot.
    #[arg(long)]
    pub no_bound: bool,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct EnumerateArgs {
    /// Reference vector, e.g. 0010110.
    #[arg(long)]
    pub reference: String,
    /// Partner vector defining the joint type.
    #[arg(long, conflicts_with = "lambda", required_unless_present = "lambda")]
    pub partner: Option<String>,
    /// Joint type as comma-separated fractions or decimals in radix order.
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub order: usize,
    #[arg(long, default_value_t = 2)]
    pub alphabet: usize,
    /// Use linear rather than circular windows.
    #[arg(long)]
    pub linear: bool,
    /// Include every member of the class in the output.
    #[arg(long)]
    pub list: bool,
    #[command(flatten)]
    pub output: Output,
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("SENSCAP_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Config(format!("SENSCAP_THREADS: expected a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Config(format!("SENSCAP_THREADS: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let _ = ctrlc::set_handler(|| INTERRUPTED.store(true, Ordering::SeqCst));
    let result = configure_threads().and_then(|()| commands::run(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Interrupted) => {
            eprintln!("interrupted; partial output was flushed");
            ExitCode::from(130)
        }
    }
}
