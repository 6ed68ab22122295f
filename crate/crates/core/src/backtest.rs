//! Historical replay of a configured controller and side-by-side comparison
//! of strategies over the same window.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::controller::{simulate, ControllerConfig, Gain, Trajectory};
use crate::drawdown::{drawdown_series, gamma_interval};
use crate::error::{Error, Result};
use crate::market_data::{returns_from_prices, PriceSeries};

/// Tolerance on `overall_pct_dd <= d_max` when judging a strategy.
pub const CAP_CHECK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub trajectory: Trajectory,
    pub terminal_value: f64,
    pub overall_pct_dd: f64,
    pub max_abs_dd: f64,
    /// Configuration actually replayed (after any support widening).
    pub config: ControllerConfig,
    pub window: (String, String),
    /// Realized returns fell outside the configured support box, which was
    /// widened to cover them before the replay.
    pub support_widened: bool,
    /// Widening shrank the admissible gain set below the configured gain,
    /// which was clamped to the nearest admissible value.
    pub gain_clamped: bool,
}

/// Replays `prices` through the controller starting from `v0`.
///
/// When the realized returns leave the configured support box the box is
/// widened to the realized extremes, so the drawdown guarantee holds for the
/// replayed data. If the wider box no longer admits the gain, the gain is
/// clamped into it and `gain_clamped` is set.
pub fn run(prices: &PriceSeries, config: &ControllerConfig, v0: f64) -> Result<BacktestReport> {
    let returns = returns_from_prices(prices);
    let gamma = match config.gain() {
        Gain::Scalar(g) => *g,
        Gain::Vector(v) => return Err(Error::NotScalar(v.len())),
    };
    let lo = returns.min().expect("at least two prices");
    let hi = returns.max().expect("at least two prices");
    let (support, support_widened) = config.support().widened(&[lo], &[hi])?;
    let (replay, gain_clamped) = if support_widened {
        let (g_lo, g_hi) = gamma_interval(&support)?;
        let clamped = gamma.clamp(g_lo, g_hi);
        let cfg = ControllerConfig::new(Gain::Scalar(clamped), *config.cap(), support, config.cash_financed())?;
        (cfg, clamped != gamma)
    } else {
        (config.clone(), false)
    };
    let trajectory = simulate(v0, &replay, returns.values())?;
    let summary = drawdown_series(&trajectory.values)?;
    Ok(BacktestReport {
        terminal_value: trajectory.terminal_value(),
        overall_pct_dd: summary.overall_pct_dd,
        max_abs_dd: summary.max_abs_dd,
        trajectory,
        config: replay,
        window: (prices.first_label().to_string(), prices.last_label().to_string()),
        support_widened,
        gain_clamped,
    })
}

/// In-sample run over closes `0..=split_index` and out-of-sample run over
/// `split_index..`, both starting from `v0`.
pub fn split_run(
    prices: &PriceSeries,
    split_index: usize,
    config: &ControllerConfig,
    v0: f64,
) -> Result<(BacktestReport, BacktestReport)> {
    let max = prices.len().saturating_sub(2);
    if split_index < 1 || split_index > max {
        return Err(Error::BadSplit { index: split_index, max });
    }
    let in_sample = prices.window(0, split_index)?;
    let out_of_sample = prices.window(split_index, prices.len() - 1)?;
    Ok((run(&in_sample, config, v0)?, run(&out_of_sample, config, v0)?))
}

impl BacktestReport {
    pub fn gamma(&self) -> f64 {
        self.config.gain().as_slice()[0]
    }

    /// Short strategy name, e.g. `modulated(gamma=11.15,d_max=0.05)`.
    pub fn label(&self) -> String {
        let cap = self.config.cap();
        if cap.is_classical() {
            format!("classical(gamma={})", self.gamma())
        } else {
            format!("modulated(gamma={},d_max={})", self.gamma(), cap.d_max())
        }
    }

    /// Flat record for the report JSON file.
    pub fn record(&self, trajectory_csv_path: impl Into<String>) -> ReportRecord {
        let cap = self.config.cap();
        ReportRecord {
            window: [self.window.0.clone(), self.window.1.clone()],
            config: ConfigRecord {
                gamma: self.gamma(),
                d_max: (!cap.is_classical()).then(|| cap.d_max()),
                classical: cap.is_classical(),
                cash: self.config.cash_financed(),
            },
            terminal_value: self.terminal_value,
            overall_pct_dd: self.overall_pct_dd,
            max_abs_dd: self.max_abs_dd,
            support_widened: self.support_widened,
            gain_clamped: self.gain_clamped,
            trajectory_csv_path: trajectory_csv_path.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigRecord {
    pub gamma: f64,
    /// `null` in the classical limit.
    pub d_max: Option<f64>,
    pub classical: bool,
    pub cash: bool,
}

/// On-disk form of a [`BacktestReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub window: [String; 2],
    pub config: ConfigRecord,
    pub terminal_value: f64,
    pub overall_pct_dd: f64,
    pub max_abs_dd: f64,
    pub support_widened: bool,
    pub gain_clamped: bool,
    pub trajectory_csv_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub strategy: String,
    pub terminal_value: f64,
    pub overall_pct_dd: f64,
    pub max_abs_dd: f64,
    pub cap_respected: bool,
    /// Differences against the first row.
    pub delta_terminal_value: f64,
    pub delta_overall_pct_dd: f64,
    pub delta_max_abs_dd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub window: (String, String),
    /// Drawdown level each strategy is judged against.
    pub reference_d_max: f64,
    pub rows: Vec<ComparisonRow>,
}

/// Tabulates reports over one window. Every strategy, classical ones
/// included, is judged against the tightest cap among the modulated reports
/// (1 when there are none).
pub fn compare(reports: &[BacktestReport]) -> Result<ComparisonTable> {
    if reports.len() < 2 {
        return Err(Error::InvalidArgument(format!("compare needs at least 2 reports, got {}", reports.len())));
    }
    let window = reports[0].window.clone();
    if let Some(r) = reports.iter().find(|r| r.window != window) {
        return Err(Error::WindowMismatch(format!("{:?} vs {:?}", window, r.window)));
    }
    let reference_d_max = reports
        .iter()
        .map(|r| r.config.cap())
        .filter(|c| !c.is_classical())
        .map(|c| c.d_max())
        .fold(1.0, f64::min);
    let base = &reports[0];
    let rows = reports
        .iter()
        .map(|r| ComparisonRow {
            strategy: r.label(),
            terminal_value: r.terminal_value,
            overall_pct_dd: r.overall_pct_dd,
            max_abs_dd: r.max_abs_dd,
            cap_respected: r.overall_pct_dd <= reference_d_max + CAP_CHECK_TOL,
            delta_terminal_value: r.terminal_value - base.terminal_value,
            delta_overall_pct_dd: r.overall_pct_dd - base.overall_pct_dd,
            delta_max_abs_dd: r.max_abs_dd - base.max_abs_dd,
        })
        .collect();
    Ok(ComparisonTable { window, reference_d_max, rows })
}

impl ComparisonTable {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for row in &self.rows {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "window {} .. {}  (cap {})", self.window.0, self.window.1, self.reference_d_max)?;
        writeln!(
            f,
            "{:<40} {:>14} {:>10} {:>12} {:>6}",
            "strategy", "terminal", "pct_dd", "abs_dd", "cap_ok"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<40} {:>14.2} {:>10.4} {:>12.2} {:>6}",
                r.strategy, r.terminal_value, r.overall_pct_dd, r.max_abs_dd, r.cap_respected
            )?;
        }
        Ok(())
    }
}
