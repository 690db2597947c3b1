use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "hashdiv", version, about = "Hash-based divergence estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a truncated-Gaussian sample and write it as CSV.
    Gen(GenArgs),
    /// Base hash estimator on two sample files.
    Estimate(EstimateArgs),
    /// Weighted ensemble estimator on two sample files.
    Ensemble(EnsembleArgs),
    /// Streaming estimator over a two-stream CSV; writes a per-step trace.
    Online(OnlineArgs),
    /// Ground-truth divergence between two truncated Gaussians.
    Oracle(OracleArgs),
    /// Run an experiment plan from a TOML file and write the bench CSVs.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DivergenceArg {
    Kl,
    Alpha,
    Renyi,
    Hellinger,
    Tv,
}

#[derive(Debug, Args)]
pub struct DivergenceArgs {
    #[arg(long, value_enum, default_value = "kl")]
    pub divergence: DivergenceArg,
    /// Order for `alpha` and `renyi`.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub clip_floor: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BoxArgs {
    /// Lower corner: one value for a cube or one per dimension.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub box_lo: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub box_hi: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct HashArgs {
    /// Grid side length.
    #[arg(long, conflicts_with = "auto_epsilon")]
    pub epsilon: Option<f64>,
    /// Use N^(-1/(gamma + d)) (the default when --epsilon is absent).
    #[arg(long)]
    pub auto_epsilon: bool,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c_h: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub dim: usize,
    /// Mean vector; zeros when absent.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub mean: Option<Vec<f64>>,
    /// Diagonal covariance; ones when absent.
    #[arg(long, value_delimiter = ',')]
    pub variance: Option<Vec<f64>>,
    #[command(flatten)]
    pub support: BoxArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    #[command(flatten)]
    pub divergence: DivergenceArgs,
    #[command(flatten)]
    pub hash: HashArgs,
    /// When given, both samples are mapped onto the unit box first.
    #[command(flatten)]
    pub support: BoxArgs,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    #[command(flatten)]
    pub divergence: DivergenceArgs,
    /// Number of bandwidth indices; d + 3 when absent.
    #[arg(long)]
    pub t_count: Option<usize>,
    #[arg(long, default_value_t = 0.8)]
    pub t_min: f64,
    #[arg(long, default_value_t = 2.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c_h: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub support: BoxArgs,
}

#[derive(Debug, Args)]
pub struct OnlineArgs {
    /// CSV with header `stream,x1,...,xd`; `stream` is `x` or `y`.
    #[arg(long)]
    pub input: PathBuf,
    /// Trace output; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub divergence: DivergenceArgs,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c_h: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub support: BoxArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Auto,
    Grid,
    Mc,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub dim: usize,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub mean1: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub mean2: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub variance1: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub variance2: Option<Vec<f64>>,
    #[command(flatten)]
    pub support: BoxArgs,
    #[command(flatten)]
    pub divergence: DivergenceArgs,
    #[arg(long, value_enum, default_value = "auto")]
    pub method: MethodArg,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// TOML experiment plan.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the plan's trial count.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Overrides the plan's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
}
