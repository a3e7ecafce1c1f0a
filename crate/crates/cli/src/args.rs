use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "rls", version, about = "Sparse support recovery by refined least squares")]
pub struct Cli {
    /// Worker threads for sweeps and Monte-Carlo loops (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a problem instance and write it to a file.
    Gen(GenArgs),
    /// Run one solver on an instance file and compare with the stored signal.
    Solve(SolveArgs),
    /// Run a Monte-Carlo recovery sweep.
    Bench(BenchArgs),
    /// Compare noise amplification with its random-matrix prediction.
    Theory(TheoryArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EnsembleArg {
    Gaussian,
    Toeplitz,
    Bernoulli,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    pub ensemble: EnsembleArg,
    /// Correlation of the Toeplitz ensemble.
    #[arg(long, default_value_t = 0.3)]
    pub rho: f64,
    #[arg(long = "N")]
    pub n: usize,
    #[arg(long = "D")]
    pub d: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, env = "RLS_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VoteModeArg {
    PerStep,
    FullPeel,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// rls, rls_fixed, rawls, omp or oracle.
    #[arg(long, default_value = "rls")]
    pub solver: String,
    /// Subsets per step (rls, rls_fixed, rawls).
    #[arg(long, default_value_t = 100)]
    pub m: usize,
    /// Subset size for rls_fixed (default: 0.875 N, rounded).
    #[arg(long)]
    pub n0: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub votes: usize,
    #[arg(long, default_value_t = 0.85)]
    pub frac_lo: f64,
    #[arg(long, default_value_t = 0.9)]
    pub frac_hi: f64,
    #[arg(long, value_enum, default_value = "per-step")]
    pub vote_mode: VoteModeArg,
    /// Solver seed.
    #[arg(long, env = "RLS_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Configuration file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub config: Option<PathBuf>,
    /// Shipped configuration (fig1, fig3, fig4, fig5, fig6).
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override any configuration key, e.g. `--set N=30:40:5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Results CSV (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for two-column plot-data files.
    #[arg(long)]
    pub plot_dir: Option<PathBuf>,
    /// Record wall-clock seconds (makes the CSV run-dependent).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Shipped configuration (fig2).
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long = "D")]
    pub d: Option<usize>,
    /// Grid of N values, e.g. `10:290:20`.
    #[arg(long = "N")]
    pub n: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ratios for the density check, e.g. `0.1, 0.5`.
    #[arg(long)]
    pub lambdas: Option<String>,
    /// Per-N CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV of the closed-form versus quadrature table.
    #[arg(long)]
    pub mp_out: Option<PathBuf>,
}
