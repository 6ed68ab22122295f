use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "ddmod", version, about = "Drawdown-modulated trading control and Kelly optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the empirical return PMF from a `date,close` price file.
    EstimatePmf(EstimatePmfArgs),
    /// Grid-search the feedback gain maximizing expected log growth.
    Optimize(OptimizeArgs),
    /// Replay prices through the controller, optionally split in/out of sample.
    Backtest(BacktestArgs),
    /// Simulate the controller on a `return` column CSV.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Output {
    /// Directory receiving all output files.
    #[arg(long, default_value = "out")]
    pub output_dir: PathBuf,
    /// Format for outputs that exist in both forms.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Seed for every random draw.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

/// Exactly one of `--d-max` or `--classical`.
#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct CapArgs {
    /// Maximum acceptable percentage drawdown, in (0, 1).
    #[arg(long)]
    pub d_max: Option<f64>,
    /// Classical Kelly limit (modulator fixed at 1).
    #[arg(long)]
    pub classical: bool,
}

#[derive(Args, Debug)]
pub struct EstimatePmfArgs {
    #[arg(long)]
    pub prices: PathBuf,
    /// Use only closes 0..=SPLIT (the in-sample window).
    #[arg(long)]
    pub split: Option<usize>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Auto,
    Exact,
    Mc,
}

#[derive(Args, Debug)]
pub struct OptimizeArgs {
    /// PMF JSON as written by `estimate-pmf`.
    #[arg(long)]
    pub pmf: PathBuf,
    #[command(flatten)]
    pub cap: CapArgs,
    #[arg(long, default_value_t = 60)]
    pub horizon: usize,
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 512)]
    pub grid: usize,
    /// Impose cash financing (|I| <= V).
    #[arg(long)]
    pub cash: bool,
    #[arg(long, value_enum, default_value_t = Method::Auto)]
    pub method: Method,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct BacktestArgs {
    #[arg(long)]
    pub prices: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: f64,
    #[command(flatten)]
    pub cap: CapArgs,
    #[arg(long, default_value_t = 10_000.0)]
    pub v0: f64,
    /// Split index: in-sample closes 0..=SPLIT, out-of-sample SPLIT..
    #[arg(long)]
    pub split: Option<usize>,
    #[arg(long)]
    pub cash: bool,
    /// Also run a classical strategy with this gain and tabulate both.
    #[arg(long, allow_hyphen_values = true)]
    pub baseline_gamma: Option<f64>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// CSV with a single `return` column.
    #[arg(long)]
    pub returns: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: f64,
    #[command(flatten)]
    pub cap: CapArgs,
    #[arg(long, default_value_t = 10_000.0)]
    pub v0: f64,
    /// Support lower bound; defaults to the smallest return in the file.
    #[arg(long, allow_hyphen_values = true)]
    pub x_min: Option<f64>,
    /// Support upper bound; defaults to the largest return in the file.
    #[arg(long)]
    pub x_max: Option<f64>,
    #[arg(long)]
    pub cash: bool,
    #[command(flatten)]
    pub output: Output,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::EstimatePmf(a) => commands::estimate_pmf(&a),
        Command::Optimize(a) => commands::optimize(&a),
        Command::Backtest(a) => commands::backtest(&a),
        Command::Simulate(a) => commands::simulate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
