use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ddmod_core::{
    compare, estimate_pmf as estimate, grid_search, returns_from_prices, run, simulate as simulate_path,
    split_run, BacktestReport, ControllerConfig, DrawdownCap, EvalMethod, GridSpec, PriceSeries, ReturnPmf,
    ReturnSeries, SupportBox,
};
use serde::Serialize;

use crate::{BacktestArgs, CapArgs, EstimatePmfArgs, Format, Method, OptimizeArgs, Output, SimulateArgs};

impl CapArgs {
    fn cap(&self) -> Result<DrawdownCap> {
        match (self.d_max, self.classical) {
            (Some(d), false) => Ok(DrawdownCap::new(d)?),
            (None, true) => Ok(DrawdownCap::classical()),
            _ => bail!("pass exactly one of --d-max or --classical"),
        }
    }
}

fn prepare(output: &Output) -> Result<()> {
    fs::create_dir_all(&output.output_dir)
        .with_context(|| format!("creating {}", output.output_dir.display()))
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn load_prices(path: &Path) -> Result<PriceSeries> {
    PriceSeries::from_csv_path(path).with_context(|| format!("reading prices from {}", path.display()))
}

fn in_sample(prices: &PriceSeries, split: Option<usize>) -> Result<PriceSeries> {
    match split {
        None => Ok(prices.clone()),
        Some(s) if s >= 1 && s + 2 <= prices.len() => Ok(prices.window(0, s)?),
        Some(s) => bail!("split index {s} out of range 1..={}", prices.len().saturating_sub(2)),
    }
}

pub fn estimate_pmf(args: &EstimatePmfArgs) -> Result<()> {
    let prices = in_sample(&load_prices(&args.prices)?, args.split)?;
    let pmf = estimate(&returns_from_prices(&prices)).context("estimating the return PMF")?;
    prepare(&args.output)?;
    match args.output.format {
        Format::Json => write(&args.output.output_dir, "pmf.json", pmf.to_json()? + "\n")?,
        Format::Csv => {
            let mut text = String::from("value,weight\n");
            for (v, w) in pmf.atoms() {
                text.push_str(&format!("{v},{w}\n"));
            }
            write(&args.output.output_dir, "pmf.csv", text)?;
        }
    }
    println!("atoms={} x_min={} x_max={}", pmf.atom_count(), pmf.x_min(), pmf.x_max());
    Ok(())
}

#[derive(Serialize)]
struct OptimizeOutput<'a> {
    d_max: Option<f64>,
    classical: bool,
    cash: bool,
    horizon: usize,
    spec: GridSpec,
    #[serde(flatten)]
    result: &'a ddmod_core::OptimizationResult,
}

pub fn optimize(args: &OptimizeArgs) -> Result<()> {
    let text = fs::read_to_string(&args.pmf).with_context(|| format!("reading {}", args.pmf.display()))?;
    let pmf = ReturnPmf::from_json(&text).with_context(|| format!("parsing {}", args.pmf.display()))?;
    let cap = args.cap.cap()?;
    let spec = GridSpec {
        grid_points: args.grid,
        paths: args.paths,
        seed: args.output.seed,
        method: match args.method {
            Method::Auto => EvalMethod::Auto,
            Method::Exact => EvalMethod::Exact,
            Method::Mc => EvalMethod::MonteCarlo,
        },
    };
    let result = grid_search(&pmf, args.horizon, &cap, args.cash, &spec)?;
    prepare(&args.output)?;
    let out = OptimizeOutput {
        d_max: (!cap.is_classical()).then(|| cap.d_max()),
        classical: cap.is_classical(),
        cash: args.cash,
        horizon: args.horizon,
        spec,
        result: &result,
    };
    write(&args.output.output_dir, "optimization.json", to_json(&out)?)?;
    let mut curve = Vec::new();
    result.write_curve_csv(&mut curve)?;
    write(&args.output.output_dir, "curve.csv", curve)?;
    println!(
        "gamma*={} J*={} interval=[{}, {}]",
        result.gamma_star, result.g_star, result.effective_interval.0, result.effective_interval.1
    );
    Ok(())
}

fn strategy_name(report: &BacktestReport) -> &'static str {
    if report.config.cap().is_classical() {
        "classical"
    } else {
        "modulated"
    }
}

fn write_report(dir: &Path, segment: &str, report: &BacktestReport) -> Result<()> {
    let stem = format!("{segment}_{}", strategy_name(report));
    let csv_name = format!("{stem}.csv");
    let mut csv = Vec::new();
    report.trajectory.write_csv(&mut csv)?;
    write(dir, &csv_name, csv)?;
    write(dir, &format!("{stem}.json"), to_json(&report.record(csv_name))?)?;
    println!(
        "{segment} {}: terminal={:.2} overall_pct_dd={:.4} max_abs_dd={:.2}{}",
        report.label(),
        report.terminal_value,
        report.overall_pct_dd,
        report.max_abs_dd,
        if report.support_widened { " (support widened)" } else { "" }
    );
    Ok(())
}

fn write_comparison(output: &Output, segment: &str, reports: &[BacktestReport]) -> Result<()> {
    let table = compare(reports)?;
    match output.format {
        Format::Json => write(&output.output_dir, &format!("{segment}_comparison.json"), table.to_json()? + "\n")?,
        Format::Csv => {
            let mut buf = Vec::new();
            table.write_csv(&mut buf)?;
            write(&output.output_dir, &format!("{segment}_comparison.csv"), buf)?;
        }
    }
    print!("{table}");
    Ok(())
}

pub fn backtest(args: &BacktestArgs) -> Result<()> {
    let prices = load_prices(&args.prices)?;
    let pmf = estimate(&returns_from_prices(&in_sample(&prices, args.split)?))
        .context("estimating the support box from in-sample returns")?;
    let support = SupportBox::from_pmf(&pmf)?;
    let cap = args.cap.cap()?;
    let mut configs = vec![ControllerConfig::scalar(args.gamma, cap, support.clone(), args.cash)?];
    if let Some(g) = args.baseline_gamma {
        if cap.is_classical() {
            bail!("--baseline-gamma compares against a modulated strategy; drop --classical");
        }
        configs.push(ControllerConfig::scalar(g, DrawdownCap::classical(), support, args.cash)?);
    }
    prepare(&args.output)?;
    let dir = &args.output.output_dir;
    match args.split {
        None => {
            let reports = configs.iter().map(|c| run(&prices, c, args.v0)).collect::<Result<Vec<_>, _>>()?;
            for r in &reports {
                write_report(dir, "full", r)?;
            }
            if reports.len() > 1 {
                write_comparison(&args.output, "full", &reports)?;
            }
        }
        Some(split) => {
            let (ins, outs): (Vec<_>, Vec<_>) = configs
                .iter()
                .map(|c| split_run(&prices, split, c, args.v0))
                .collect::<Result<Vec<_>, _>>()?
                .into_iter()
                .unzip();
            for r in &ins {
                write_report(dir, "in_sample", r)?;
            }
            for r in &outs {
                write_report(dir, "out_of_sample", r)?;
            }
            if ins.len() > 1 {
                write_comparison(&args.output, "in_sample", &ins)?;
                write_comparison(&args.output, "out_of_sample", &outs)?;
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SimulateSummary {
    gamma: f64,
    d_max: Option<f64>,
    classical: bool,
    cash: bool,
    x_min: f64,
    x_max: f64,
    terminal_value: f64,
    overall_pct_dd: f64,
    max_abs_dd: f64,
    trajectory_csv_path: String,
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let file = fs::File::open(&args.returns).with_context(|| format!("opening {}", args.returns.display()))?;
    let returns = ReturnSeries::from_csv_reader(file)?;
    if returns.is_empty() {
        bail!("{} holds no returns", args.returns.display());
    }
    let x_min = args.x_min.unwrap_or_else(|| returns.min().unwrap());
    let x_max = args.x_max.unwrap_or_else(|| returns.max().unwrap());
    let support = SupportBox::scalar(x_min, x_max).context("support box")?;
    let cap = args.cap.cap()?;
    let config = ControllerConfig::scalar(args.gamma, cap, support, args.cash)?;
    let trajectory = simulate_path(args.v0, &config, returns.values())?;
    let summary = ddmod_core::drawdown_series(&trajectory.values)?;
    prepare(&args.output)?;
    let mut csv = Vec::new();
    trajectory.write_csv(&mut csv)?;
    write(&args.output.output_dir, "trajectory.csv", csv)?;
    let out = SimulateSummary {
        gamma: args.gamma,
        d_max: (!cap.is_classical()).then(|| cap.d_max()),
        classical: cap.is_classical(),
        cash: args.cash,
        x_min,
        x_max,
        terminal_value: trajectory.terminal_value(),
        overall_pct_dd: summary.overall_pct_dd,
        max_abs_dd: summary.max_abs_dd,
        trajectory_csv_path: "trajectory.csv".into(),
    };
    write(&args.output.output_dir, "simulation.json", to_json(&out)?)?;
    println!(
        "terminal={:.2} overall_pct_dd={:.4} max_abs_dd={:.2}",
        out.terminal_value, out.overall_pct_dd, out.max_abs_dd
    );
    Ok(())
}
