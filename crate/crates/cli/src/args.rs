use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nlmarkov::coefficients::{
    DEFAULT_MIN_SEP, DEFAULT_RESOLUTION, DEFAULT_SAMPLES, DEFAULT_TIE_TOL,
};
use nlmarkov::invariant::{DEFAULT_MAX_ITER, DEFAULT_SLACK, DEFAULT_TOL};
use serde::Serialize;

/// Nonlinear Markov chain toolkit: ergodicity coefficients, convergence
/// bounds, invariant measures and Monte Carlo checks.
///
/// States are numbered from 1 on the command line and in all output.
#[derive(Debug, Parser)]
#[command(name = "nlmarkov", version)]
pub struct Cli {
    /// Worker threads for coefficient search and simulation (0 = all cores).
    /// Output does not depend on this value.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Write output here instead of stdout.
    #[arg(short, long, global = true)]
    pub output: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a kernel file against the affine-kernel constraints.
    Validate(ValidateArgs),
    /// Emit the four-state example kernel file for a given gamma.
    Example(ExampleArgs),
    /// Estimate alpha_k, lambda_k and lambda_1 and classify the regime.
    Coeffs(CoeffsArgs),
    /// Law flow mu_0, mu_1, ..., mu_n as CSV.
    Evolve(EvolveArgs),
    /// Solve pi = pi P_pi by fixed-point iteration.
    Invariant(InvariantArgs),
    /// Evaluate the convergence bound from explicit coefficients.
    Bound(BoundArgs),
    /// Estimate coefficients, solve for pi and check the bound against the law flow.
    Verify(VerifyArgs),
    /// Simulate trajectories of the chain.
    Simulate(SimulateArgs),
    /// Ergodic-average experiment for an observable g.
    Lln(LlnArgs),
    /// Per-step convergence rates of the example chain for k = 2, 3.
    Table1(Table1Args),
    /// Re-run the command recorded in an output header.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::Example(_) => "example",
            Command::Coeffs(_) => "coeffs",
            Command::Evolve(_) => "evolve",
            Command::Invariant(_) => "invariant",
            Command::Bound(_) => "bound",
            Command::Verify(_) => "verify",
            Command::Simulate(_) => "simulate",
            Command::Lln(_) => "lln",
            Command::Table1(_) => "table1",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    /// Kernel definition file (JSON).
    pub kernel: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ExampleArgs {
    /// Strength of the measure dependence, in [0, 0.5].
    #[arg(long)]
    pub gamma: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SearchArgs {
    /// Number of composed steps.
    #[arg(short, long, default_value_t = 1)]
    pub k: usize,
    /// Simplex lattice resolution m (points have denominator m).
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    pub resolution: usize,
    /// Additional Dirichlet(1, ..., 1) sample measures.
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Smallest tv(mu, nu) admitted in the lambda ratio.
    #[arg(long, default_value_t = DEFAULT_MIN_SEP)]
    pub min_sep: f64,
    /// Tolerance for the lambda_k = alpha_k tie.
    #[arg(long, default_value_t = DEFAULT_TIE_TOL)]
    pub tie_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Kv,
    Csv,
}

#[derive(Debug, Args, Serialize)]
pub struct CoeffsArgs {
    pub kernel: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub search: SearchArgs,
    #[arg(long, value_enum, default_value_t = ReportFormat::Kv)]
    pub format: ReportFormat,
}

#[derive(Debug, Args, Serialize)]
pub struct EvolveArgs {
    pub kernel: PathBuf,
    /// Initial law: `uniform`, `e<i>` (point mass on state i) or comma-separated weights.
    #[arg(long, default_value = "uniform")]
    pub mu0: String,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct InvariantArgs {
    pub kernel: PathBuf,
    #[arg(long, default_value = "uniform")]
    pub mu0: String,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Extra random starting measures for a uniqueness probe.
    #[arg(long, default_value_t = 0)]
    pub starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct BoundArgs {
    #[arg(short, long, default_value_t = 1)]
    pub k: usize,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub lambda: f64,
    /// One-step coefficient for the partial block; defaults to --lambda when k = 1.
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// tv(mu_0, pi), mass-2 convention.
    #[arg(long, default_value_t = 2.0)]
    pub initial_tv: f64,
    #[arg(long, default_value_t = 100)]
    pub n_max: usize,
    #[arg(long, default_value_t = DEFAULT_TIE_TOL)]
    pub tie_tol: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    pub kernel: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub search: SearchArgs,
    #[arg(long, default_value = "uniform")]
    pub mu0: String,
    #[arg(long, default_value_t = 200)]
    pub n_max: usize,
    /// Fixed-point tolerance for pi.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Allowed excess of the empirical distance over the bound.
    #[arg(long, default_value_t = DEFAULT_SLACK)]
    pub slack: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    pub kernel: PathBuf,
    #[arg(long, default_value = "uniform")]
    pub mu0: String,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    #[arg(long, default_value_t = 1)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct LlnArgs {
    pub kernel: PathBuf,
    #[arg(long, default_value = "uniform")]
    pub mu0: String,
    /// Observable values, one per state, comma-separated.
    #[arg(long, conflicts_with = "indicator")]
    pub g: Option<String>,
    /// Use the indicator of this state as the observable.
    #[arg(long)]
    pub indicator: Option<usize>,
    /// Horizon n of the ergodic average [default: 1000].
    #[arg(long)]
    pub steps: Option<usize>,
    /// Comma-separated increasing horizons; emits a convergence table instead.
    #[arg(long, conflicts_with = "steps")]
    pub n_list: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Estimate the regime with this many composed steps before simulating.
    #[arg(long)]
    pub regime_k: Option<usize>,
    /// Lattice resolution for the regime estimate.
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    pub resolution: usize,
    /// Emit per-path sample means instead of the summary.
    #[arg(long)]
    pub per_path: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct Table1Args {
    /// Lattice resolution for the k = 2 coefficient search.
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    pub resolution: usize,
    /// One row per (k, gamma) with the coefficients behind each rate.
    #[arg(long)]
    pub long: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    /// A file produced by this program.
    pub file: PathBuf,
    /// Compare the regenerated output with the file instead of printing it.
    #[arg(long)]
    pub check: bool,
}
