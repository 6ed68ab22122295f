//! Drawdown-modulated feedback control for single-stock and portfolio trading.
//!
//! The investment rule `I(k) = gamma * M(k) * V(k)` scales a fixed gain by a
//! modulator that shrinks to zero as the running percentage drawdown approaches
//! a cap `d_max`. With `gamma` inside the admissible gain set the drawdown never
//! exceeds `d_max` on any realizable return sequence. On top of that guarantee
//! the crate solves a drawdown-constrained Kelly problem: pick the gain that
//! maximizes expected log growth, evaluated either exactly by enumerating all
//! return sequences or by seeded Monte Carlo.
//!
//! Modules, bottom-up:
//! - [`market_data`]: price ingestion, returns, empirical PMF, seeded paths.
//! - [`drawdown`]: high-water-mark state, modulator and admissibility tests.
//! - [`controller`]: the feedback law and trajectory simulation.
//! - [`kelly`]: exact and Monte-Carlo objective, grid search over the gain.
//! - [`backtest`]: historical replay and strategy comparison.

pub mod backtest;
pub mod controller;
pub mod drawdown;
mod error;
pub mod kelly;
pub mod market_data;
mod numeric;

pub use backtest::{compare, run, split_run, BacktestReport, ComparisonRow, ComparisonTable, ReportRecord};
pub use controller::{investment, simulate, simulate_portfolio, ControllerConfig, Gain, Trajectory};
pub use drawdown::{
    drawdown_series, gamma_interval, modulator, portfolio_admissible, portfolio_gamma_admissible,
    scalar_bounds, update_state, AccountState, DrawdownCap, DrawdownSummary, InvestmentInterval,
    SupportBox,
};
pub use error::{Error, Result};
pub use kelly::{
    effective_interval, exact_objective, grid_search, mc_objective, EvalMethod, ObjectiveEstimate,
    ObjectiveMode, OptimizationResult, GridSpec,
};
pub use market_data::{
    estimate_pmf, returns_from_prices, sample_path, PriceSeries, ReturnPath, ReturnPmf,
    ReturnSeries,
};
