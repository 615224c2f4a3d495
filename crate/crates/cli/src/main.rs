mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

/// Graph-regularized tensor regression experiments.
#[derive(Debug, Parser)]
#[command(name = "grtr", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Planted low-rank recovery: LR, L2LR, TR, L2TR and GRTR on synthetic tensors.
    Synthetic(SyntheticArgs),
    /// Windowed market-data forecast with a sector graph on the stock mode.
    Finance(FinanceArgs),
    /// Finite-difference check of the analytic gradients.
    Gradcheck(GradcheckArgs),
    /// Coefficients, factor vectors and prediction breakdowns of a saved model.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Base random seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report path; the report goes to stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Convergence tolerance on the training MSE.
    #[arg(long, default_value_t = 0.0)]
    pub tol: f64,
    /// Models to train: `all` or a comma list of lr, l2lr, tr, l2tr, grtr.
    #[arg(long, default_value = "all")]
    pub models: String,
    /// Directory for per-model loss traces (CSV).
    #[arg(long)]
    pub trace_dir: Option<PathBuf>,
    /// Record wall-clock seconds per model (reports are then not reproducible byte for byte).
    #[arg(long)]
    pub timings: bool,
    /// JSON file with experiment settings; flags given on the command line override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SyntheticArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of consecutive seeds; medians are reported across them.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
    /// CPD rank of the tensor models.
    #[arg(long, default_value_t = 5)]
    pub rank: usize,
    /// GRTR regularization, one value per mode or a single value for all.
    #[arg(long, default_value = "100")]
    pub lambda: String,
    /// L2TR regularization, applied to every mode.
    #[arg(long, default_value_t = 100.0)]
    pub l2tr_lambda: f64,
    /// L2LR ridge constant.
    #[arg(long, default_value_t = 1.0)]
    pub l2lr_lambda: f64,
    /// Gradient-descent learning rate.
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Maximum number of training iterations.
    #[arg(long, default_value_t = 300)]
    pub max_steps: usize,
    /// Half-width of the uniform factor initialization.
    #[arg(long, default_value_t = 0.5)]
    pub init_scale: f64,
    /// Tensor order.
    #[arg(long, default_value_t = 4)]
    pub order: usize,
    /// Size of every mode.
    #[arg(long, default_value_t = 10)]
    pub mode_size: usize,
    /// Rank of the ground-truth weights.
    #[arg(long, default_value_t = 5)]
    pub true_rank: usize,
    /// Number of samples before the 80/20 split.
    #[arg(long, default_value_t = 125)]
    pub samples: usize,
    /// Noise standard deviation relative to the label standard deviation.
    #[arg(long, default_value_t = 0.5)]
    pub noise_ratio: f64,
    /// Kernel width of the per-mode graphs.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
}

#[derive(Debug, Args)]
pub struct FinanceArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Long-format prices CSV (date,ticker,adj_close,close,high,low,open,volume).
    #[arg(long, requires = "sectors", conflicts_with = "fixture")]
    pub prices: Option<PathBuf>,
    /// Sectors CSV (ticker,sector).
    #[arg(long, requires = "prices", conflicts_with = "fixture")]
    pub sectors: Option<PathBuf>,
    /// Use the bundled 20-ticker, 4-sector, 500-date fixture.
    #[arg(long)]
    pub fixture: bool,
    /// Rolling window length in time steps.
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    /// Sector-graph edge weight.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Rank grid for the tensor models (comma list).
    #[arg(long, default_value = "1,2,4")]
    pub rank: String,
    /// Regularization grid for L2TR and for the GRTR stock mode (comma list).
    #[arg(long, default_value = "0,1,3,10")]
    pub lambda: String,
    /// Ridge grid for L2LR (comma list).
    #[arg(long, default_value = "1,10,100,1000")]
    pub l2lr_lambda: String,
    /// Gradient-descent learning rate.
    #[arg(long, default_value_t = 3e-2)]
    pub lr: f64,
    /// Maximum number of training iterations.
    #[arg(long, default_value_t = 500)]
    pub max_steps: usize,
    /// Half-width of the uniform factor initialization.
    #[arg(long, default_value_t = 0.3)]
    pub init_scale: f64,
    /// Feed raw volume levels (z-scored) instead of volume log-differences.
    #[arg(long)]
    pub raw_volume: bool,
    /// Where to save the selected GRTR model; defaults to `<output>.model.json`.
    #[arg(long)]
    pub model_output: Option<PathBuf>,
    /// Directory for the sector adjacency and Laplacian CSVs.
    #[arg(long)]
    pub graph_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Number of random instances.
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-6)]
    pub step: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Per-trial JSON report path.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, hide = true, default_value_t = 0.0)]
    pub corrupt: f64,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Model JSON written by `finance`.
    #[arg(long)]
    pub model: PathBuf,
    /// 1-based multi-index of a weight coefficient, e.g. `1,10,2`; repeatable.
    #[arg(long)]
    pub coef: Vec<String>,
    /// Directory for one CSV per factor matrix (rows are mode indices, columns ranks).
    #[arg(long)]
    pub factors_dir: Option<PathBuf>,
    /// Input tensor JSON (`{"shape": [...], "data": [...]}`) to break down mode by mode.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output path for the JSON summary; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = Cli::command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let sub = matches.subcommand().map(|(_, m)| m).expect("subcommand is required");
    match commands::run(cli.command, sub) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
