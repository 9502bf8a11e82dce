//! `clear`: restoration with covariant re-fitting, parameter sweeps and
//! property validation from the command line.
//!
//! Exit codes: 0 success, 1 failed check or computation, 2 usage error,
//! 3 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use clear_core::experiments::validation::Suite;
use clear_core::experiments::{EstimatorId, JvpChoice};

mod commands;
mod manifest;

#[derive(Parser, Debug)]
#[command(
    name = "clear",
    version,
    about = "Covariant least-squares re-fitting of restoration estimators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Degrade an image, restore it and write the estimate and its re-fitting.
    Restore(RestoreArgs),
    /// Sweep the regularisation parameter and write a CSV of quality metrics.
    Sweep(SweepArgs),
    /// Run a named property suite and print its checks.
    Validate(ValidateArgs),
    /// Re-execute a run from its manifest.
    Rerun(RerunArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Denoise,
    Inpaint,
    Deblur,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Denoise => "denoise",
            Task::Inpaint => "inpaint",
            Task::Deblur => "deblur",
        }
    }
}

/// Options shared by `restore` and `sweep`.
#[derive(Args, Debug, Clone)]
pub struct ProblemArgs {
    /// tikhonov, tv_aniso, tv_iso, lasso, soft, hard or nlm.
    #[arg(long)]
    pub estimator: EstimatorId,
    #[arg(long, value_enum, default_value_t = Task::Denoise)]
    pub task: Task,
    /// Image file (PGM or text grid) or a phantom name
    /// (step_1d, squares_2d, shepp_like, texture_stripes).
    #[arg(long = "in")]
    pub input: String,
    /// Side length for phantom inputs.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Ground truth for metrics. Phantom inputs are their own truth.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Treat the input as the observation itself (denoising only).
    #[arg(long)]
    pub observed: bool,
    /// Noise standard deviation, on the 0..255 scale.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.25)]
    pub mask_fraction: f64,
    /// Gaussian blur width in pixels.
    #[arg(long, default_value_t = 1.5)]
    pub blur: f64,
    #[arg(long, env = "CLEAR_SEED", default_value_t = 0)]
    pub seed: u64,
    /// NLM half search-window width.
    #[arg(long = "s", default_value_t = 7)]
    pub s: usize,
    /// NLM half patch width.
    #[arg(long = "b", default_value_t = 1)]
    pub b: usize,
    #[arg(long, default_value_t = 20_000)]
    pub iters: usize,
    /// Relative-change stopping tolerance (0 runs the full budget).
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Derivative inflation; defaults to 1e-8·λ.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value = "algorithmic")]
    pub jvp: JvpChoice,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RestoreArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// NLM bandwidth.
    #[arg(long)]
    pub h: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Geometric grid `LO:HI:N`.
    #[arg(long, conflicts_with = "points")]
    pub grid: Option<String>,
    /// Explicit comma-separated parameter values.
    #[arg(long)]
    pub points: Option<String>,
    /// Worker threads; results do not depend on this.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// thresholding, fixed_point, iterate_limit or montecarlo.
    pub suite: Suite,
    #[arg(long, env = "CLEAR_SEED", default_value_t = 7)]
    pub seed: u64,
    /// Monte-Carlo draws.
    #[arg(long = "n", default_value_t = 20_000)]
    pub draws: usize,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Directory for the check table and manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RerunArgs {
    pub manifest: PathBuf,
    /// Output directory; defaults to the one recorded in the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn dispatch(cmd: Command) -> Result<(), commands::Failure> {
    match cmd {
        Command::Restore(a) => commands::restore(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Validate(a) => commands::validate(&a),
        Command::Rerun(a) => commands::rerun(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
