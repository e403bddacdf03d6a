use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Counterfactual scenario search over multivariate time series.
#[derive(Debug, Parser)]
#[command(name = "cfsearch", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic VAR series bundle.
    Synth(SynthArgs),
    /// Train causality, quantile banks and the target forecaster.
    Train(TrainArgs),
    /// Run only the pairwise causality analysis and write the heatmap.
    Causality(CausalityArgs),
    /// Walk-forward evaluation of point learners on the target.
    Evaluate(EvaluateArgs),
    /// Search intervention policies that reach a goal.
    Search(SearchArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Built-in benchmark: granger4, ga5, null2 or ar1.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    pub bench: Option<String>,
    /// JSON file with a custom system specification.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 5000)]
    pub length: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for series.csv, meta.json and spec.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LagArgs {
    #[arg(long, default_value_t = cfsearch_core::bundle::DEFAULT_LAG_ORDER)]
    pub lag_order: usize,
    #[arg(long, default_value_t = cfsearch_core::bundle::DEFAULT_FOLDS)]
    pub folds: usize,
    #[arg(long, default_value_t = cfsearch_core::bundle::DEFAULT_RIDGE_LAMBDA)]
    pub ridge_lambda: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Series bundle directory.
    #[arg(long)]
    pub series: PathBuf,
    /// Output model bundle JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Heatmap CSV; defaults to heatmap.csv next to the bundle.
    #[arg(long)]
    pub heatmap: Option<PathBuf>,
    #[command(flatten)]
    pub lag: LagArgs,
    /// Comma-separated quantile alphabet; must contain 0.5.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
    /// Also train a direct forecaster this many steps ahead.
    #[arg(long)]
    pub direct_horizon: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CausalityArgs {
    #[arg(long)]
    pub series: PathBuf,
    /// Output heatmap CSV (a mask file is written beside it).
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub lag: LagArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub series: PathBuf,
    #[arg(long)]
    pub bundle: PathBuf,
    /// Metrics CSV output.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated learners: ridge, quantile_median, persistence.
    #[arg(long, value_delimiter = ',', default_value = "ridge,quantile_median,persistence")]
    pub learners: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub series: PathBuf,
    #[arg(long)]
    pub bundle: PathBuf,
    /// Goal value for the target's terminal projection.
    #[arg(long, allow_negative_numbers = true, required_unless_present = "planted_tau")]
    pub goal: Option<f64>,
    /// Use the terminal reached by the policy holding every actionable
    /// variable at this quantile level as the goal.
    #[arg(long, conflicts_with = "goal")]
    pub planted_tau: Option<f64>,
    /// Relative tolerance around the goal.
    #[arg(long, default_value_t = 0.05)]
    pub tolerance: f64,
    /// Projection horizon in steps.
    #[arg(long, default_value_t = 10)]
    pub horizon: usize,
    #[arg(long, default_value_t = 200)]
    pub population: usize,
    #[arg(long, default_value_t = 0.25)]
    pub mutation_prob: f64,
    #[arg(long, default_value_t = 0.75)]
    pub crossover_prob: f64,
    #[arg(long, default_value_t = 3)]
    pub tournament: usize,
    #[arg(long, default_value_t = 0.10)]
    pub immigrant_rate: f64,
    #[arg(long, default_value_t = 100)]
    pub generations: usize,
    #[arg(long, default_value_t = 1)]
    pub elitism: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub w1: f64,
    #[arg(long, default_value_t = 0.1)]
    pub w2: f64,
    #[arg(long, default_value_t = 0.1)]
    pub w3: f64,
    /// SearchResult JSON output.
    #[arg(long)]
    pub out: PathBuf,
    /// Trace CSV output; defaults to `<result stem>_trace.csv`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub series: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8099)]
    pub port: u16,
}
