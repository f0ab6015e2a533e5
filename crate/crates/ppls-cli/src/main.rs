//! Command-line interface for probabilistic partial least squares
//! regression with unique variance.
//!
//! Subcommands cover the full workflow: `fit` (maximum likelihood on CSV
//! data with native missing-entry support), `select` (BIC over a grid of
//! latent dimensions), `predict` (response means and variances given
//! observed inputs), `scores` (latent posterior means per row), `simulate`
//! (synthetic data and sampling-distribution studies), and `biplot`
//! (plot-ready axis scores, loading arrows, and metadata).
//!
//! Exit codes are a stable contract: `0` success, `2` usage error, `3` data
//! error (unreadable or malformed files, shape conflicts), `4` numerical
//! failure (singular covariance, a fit that failed on every restart).
//!
//! The environment variable `PPLS_THREADS` caps the size of the thread pool
//! used for parallel restarts and grid cells; outputs are independent of
//! the thread count.

mod commands;
mod ingest;
mod output;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ppls",
    version,
    about = "Probabilistic partial least squares regression with unique variance",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit a model to CSV data; writes model JSON and a fit report
    Fit(FitArgs),
    /// Fit a grid of latent dimensions and pick the BIC minimizer
    Select(SelectArgs),
    /// Per-row predictive mean and variance of y given observed x
    Predict(PredictArgs),
    /// Per-row factor scores (latent posterior means)
    Scores(ScoresArgs),
    /// Draw synthetic data from a model, or run a sampling study
    Simulate(SimulateArgs),
    /// Export biplot data: axis scores, loading arrows, metadata
    Biplot(BiplotArgs),
}

/// Where the observed table(s) come from.
#[derive(Args)]
struct DataArgs {
    /// Input CSV holding the x block (or the full table with --y-cols)
    #[arg(long, value_name = "FILE")]
    x: PathBuf,

    /// Separate CSV holding the y block, same row count and order as --x
    #[arg(long, value_name = "FILE", conflicts_with = "y_cols")]
    y: Option<PathBuf>,

    /// Comma-separated column names in the --x file that form the y block
    #[arg(long, value_name = "NAMES", value_delimiter = ',')]
    y_cols: Vec<String>,
}

/// Preprocessing switches, applied in the order they are listed here.
#[derive(Args)]
struct PrepArgs {
    /// Encode each observed x entry as 1 if nonzero, 0 otherwise
    #[arg(long)]
    binarize: bool,

    /// Drop x columns whose observed mean is below RATE or above 1-RATE;
    /// giving the flag without a value uses the default threshold 0.1
    #[arg(long, value_name = "RATE", num_args = 0..=1, default_missing_value = "0.1")]
    rate_min: Option<f64>,

    /// Replace observed y values by their natural logarithm (all observed
    /// y values must be strictly positive)
    #[arg(long)]
    log_y: bool,

    /// Drop rows whose y entries are all missing
    #[arg(long)]
    require_y: bool,
}

/// Optimizer settings shared by the fitting subcommands.
#[derive(Args)]
struct OptimArgs {
    /// Seed for restart initialization (and sampling, where applicable)
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Number of independent optimizer restarts
    #[arg(long)]
    restarts: Option<usize>,

    /// Relative log-likelihood change treated as convergence
    #[arg(long)]
    tol: Option<f64>,

    /// Iteration cap per restart
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    prep: PrepArgs,
    /// Shared latent dimension
    #[arg(long)]
    pu: usize,
    /// Input-specific latent dimension
    #[arg(long)]
    pv: usize,
    #[command(flatten)]
    optim: OptimArgs,
    /// Model JSON output path
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Fit report path (default: <out stem>.report.json)
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    prep: PrepArgs,
    /// Largest shared dimension in the grid (grid runs 1..=pu-max)
    #[arg(long, value_name = "N")]
    pu_max: usize,
    /// Largest input-specific dimension in the grid (grid runs 0..=pv-max)
    #[arg(long, value_name = "N")]
    pv_max: usize,
    #[command(flatten)]
    optim: OptimArgs,
    /// Best-model JSON output path
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Grid CSV path (default: <out stem>.grid.csv)
    #[arg(long, value_name = "FILE")]
    grid_out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Model JSON written by fit or select
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// CSV with the x block; column count must match the model
    #[arg(long, value_name = "FILE")]
    x: PathBuf,
    /// Encode each observed x entry as 1 if nonzero, 0 otherwise
    #[arg(long)]
    binarize: bool,
    /// Predictions CSV output path
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct ScoresArgs {
    /// Model JSON written by fit or select
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Encode each observed x entry as 1 if nonzero, 0 otherwise
    #[arg(long)]
    binarize: bool,
    /// Replace observed y values by their natural logarithm
    #[arg(long)]
    log_y: bool,
    /// Also write scores conditioned on y alone (requires a y block)
    #[arg(long)]
    with_y_scores: bool,
    /// Scores CSV output path
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Model JSON to draw from (the truth, in study mode)
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Rows to draw (data mode)
    #[arg(long)]
    n: Option<usize>,
    /// Fraction of cells to mask at random after drawing (data mode)
    #[arg(long, value_name = "FRAC")]
    missing_frac: Option<f64>,
    /// Run a sampling-distribution study instead of drawing one dataset
    #[arg(long)]
    study: bool,
    /// Sample sizes for the study, e.g. 500,2000,8000
    #[arg(long, value_name = "N,N,...", value_delimiter = ',')]
    sizes: Vec<usize>,
    /// Replicates per sample size (study mode)
    #[arg(long)]
    reps: Option<usize>,
    #[command(flatten)]
    optim: OptimArgs,
    /// Output path: data CSV, or the study's estimates CSV
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Study summary JSON path (default: <out stem>.summary.json)
    #[arg(long, value_name = "FILE")]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct BiplotArgs {
    /// Model JSON written by fit or select
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Encode each observed x entry as 1 if nonzero, 0 otherwise
    #[arg(long)]
    binarize: bool,
    /// Replace observed y values by their natural logarithm
    #[arg(long)]
    log_y: bool,
    /// Zero-based pair of shared axes to plot (default: 0,1, the two
    /// strongest)
    #[arg(long, value_name = "I,J", value_delimiter = ',', num_args = 2)]
    axes: Option<Vec<usize>>,
    /// Output prefix: writes <out>.scores.csv, <out>.arrows.csv,
    /// <out>.meta.json
    #[arg(long, value_name = "PREFIX")]
    out: PathBuf,
}

/// CLI-level error carrying its exit-code class.
#[derive(Debug)]
pub enum CliError {
    /// Wrong invocation: bad flag values, impossible dimension requests.
    Usage(String),
    /// Unreadable or malformed input files, shape conflicts with the data.
    Data(String),
    /// The requested computation failed numerically.
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Classifies a library error raised while computing (fitting, predicting,
/// scoring): impossible requests are usage errors, numerical breakdowns get
/// their own code, and everything else is treated as a data problem.
pub fn classify_compute(e: ppls::PplsError) -> CliError {
    use ppls::PplsError as E;
    match &e {
        E::NotIdentifiable { .. } | E::InvalidParameter { .. } => CliError::Usage(e.to_string()),
        E::SingularCovariance { .. }
        | E::RankDeficient { .. }
        | E::FitFailed { .. }
        | E::NoSignal { .. } => CliError::Numeric(e.to_string()),
        _ => CliError::Data(e.to_string()),
    }
}

/// Wraps an error raised while reading or parsing inputs.
pub fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn init_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("PPLS_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.parse().map_err(|_| {
        CliError::Usage(format!("PPLS_THREADS must be a positive integer, got '{raw}'"))
    })?;
    if n == 0 {
        return Err(CliError::Usage(
            "PPLS_THREADS must be a positive integer, got '0'".into(),
        ));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("could not configure the thread pool: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.cmd {
        Cmd::Fit(args) => commands::fit(&args),
        Cmd::Select(args) => commands::select(&args),
        Cmd::Predict(args) => commands::predict(&args),
        Cmd::Scores(args) => commands::scores(&args),
        Cmd::Simulate(args) => commands::simulate(&args),
        Cmd::Biplot(args) => commands::biplot(&args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {}", e.message());
        return ExitCode::from(e.exit_code());
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
