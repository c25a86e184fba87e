use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "wdam", version, about = "Dense associative memory over Gaussian measures")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output file; stdout when absent. Manifests and sidecars need a file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads for data-parallel kernels.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Use the full-size experiment parameters instead of desk scale.
    #[arg(long, global = true)]
    pub paper_scale: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a bank on a Wasserstein sphere.
    Sample(SampleArgs),
    /// Move one stored pattern to a given W2 distance.
    Perturb(PerturbArgs),
    /// Iterate Φ from a query.
    Retrieve(RetrieveArgs),
    /// Evaluate the separation and temperature conditions on a bank.
    Check(CheckArgs),
    /// Closed-form capacity, contraction and error bounds.
    Bounds {
        #[command(subcommand)]
        which: BoundsCommand,
    },
    /// Energy of N(μ, σ²) over a grid for a one-dimensional bank.
    EnergyGrid(EnergyGridArgs),
    /// Displacement and weights of one Φ step over a 2-D grid of means.
    PhiGrid(PhiGridArgs),
    /// Retrieval convergence from perturbed patterns.
    Convergence(ConvergenceArgs),
    /// Retrieval success rate over a β grid.
    BetaSweep(BetaSweepArgs),
    /// Gaussian word embeddings.
    Embed {
        #[command(subcommand)]
        which: EmbedCommand,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BankKind {
    Commuting,
    Noncommuting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerArg {
    Rejection,
    HitAndRun,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    #[arg(long, value_enum, default_value_t = BankKind::Commuting)]
    pub kind: BankKind,
    #[arg(long)]
    pub dim: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub lambda_min: Option<f64>,
    #[arg(long)]
    pub lambda_max: Option<f64>,
    /// Sphere radius; defaults to √(d(λ_min+λ_max)), or √(2d) for
    /// non-commuting banks.
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, value_enum, default_value_t = SamplerArg::Rejection)]
    pub sampler: SamplerArg,
    #[arg(long, default_value_t = 1000)]
    pub burn_in: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct PerturbArgs {
    #[arg(long)]
    pub bank: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub pattern: usize,
    #[arg(long)]
    pub radius: f64,
    /// Share of r² spent on the mean.
    #[arg(long, default_value_t = 0.5)]
    pub mean_fraction: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub bank: PathBuf,
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long, default_value_t = wdam::dam::DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    #[arg(long, default_value_t = wdam::dam::DEFAULT_TOL)]
    pub tol: f64,
    /// Stored pattern to measure W2 against at every iterate.
    #[arg(long)]
    pub target: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct CheckArgs {
    #[arg(long)]
    pub bank: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum BoundsCommand {
    /// Storage capacity for a failure probability.
    Capacity {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        p: f64,
        /// λ_max/λ_min with λ_min = 1; alternative to the explicit bounds.
        #[arg(long, conflicts_with_all = ["lambda_min", "lambda_max"])]
        gamma: Option<f64>,
        #[arg(long, requires = "lambda_max")]
        lambda_min: Option<f64>,
        #[arg(long, requires = "lambda_min")]
        lambda_max: Option<f64>,
    },
    /// Contraction coefficient 144βM_W²/N.
    Kappa(StatsArgs),
    /// Iterations needed to get within ε of the fixed point.
    Iters {
        #[arg(long)]
        eps: f64,
        #[command(flatten)]
        stats: StatsArgs,
    },
    /// One-step error bound 3/√(βN).
    OneStep {
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        n: usize,
    },
}

/// Bank statistics, given directly or read from a bank file.
#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long, conflicts_with_all = ["beta", "n", "m_w"])]
    pub bank: Option<PathBuf>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m_w: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct EnergyGridArgs {
    /// One-dimensional bank; random patterns are drawn when absent.
    #[arg(long)]
    pub bank: Option<PathBuf>,
    /// Number of random patterns when no bank is given.
    #[arg(long, default_value_t = 5)]
    pub patterns: usize,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true, default_values_t = [-4.0, 4.0])]
    pub mu_range: Vec<f64>,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [0.01, 2.0])]
    pub sigma_range: Vec<f64>,
    #[arg(long, num_args = 2, value_names = ["N_MU", "N_SIGMA"], default_values_t = [200, 200])]
    pub grid: Vec<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct PhiGridArgs {
    /// Two-dimensional bank; the five-pattern layout is used when absent.
    #[arg(long)]
    pub bank: Option<PathBuf>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = 20)]
    pub grid: usize,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true, default_values_t = [-4.0, 4.0])]
    pub range: Vec<f64>,
    /// Queries have covariance `v I`.
    #[arg(long, default_value_t = 0.5)]
    pub query_var: f64,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    /// Full experiment config as JSON; other flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dense non-commuting bank instead of a commuting family.
    #[arg(long)]
    pub noncommuting: bool,
    #[command(flatten)]
    pub overrides: Overrides,
    #[arg(long, value_delimiter = ',')]
    pub multipliers: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct BetaSweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct Overrides {
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub beta: Option<Vec<f64>>,
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum EmbedCommand {
    /// Write a synthetic spherical vocabulary.
    Generate(EmbedGenerateArgs),
    /// Turn a vocabulary file into a bank file.
    Import(EmbedImportArgs),
    /// Perturb words and follow their retrieval.
    Retrieve(EmbedRetrieveArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct EmbedGenerateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub dim: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct EmbedImportArgs {
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct EmbedRetrieveArgs {
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long, default_value_t = 50.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    /// Words to follow; a seeded random selection when absent.
    #[arg(long, value_delimiter = ',')]
    pub words: Option<Vec<String>>,
    #[arg(long, default_value_t = 10)]
    pub num_words: usize,
}
