//! Drawdown-constrained Kelly optimization over the scalar feedback gain.
//!
//! The objective is the expected log growth per period
//! `J(gamma) = E[log(V_gamma(N) / V(0))] / N` of the modulated recursion
//! `V(k+1) = (1 + gamma M(k) X(k)) V(k)` under i.i.d. returns from a PMF.
//! Because `M(k)` depends on the running drawdown the objective is path
//! dependent. It is evaluated either exactly, by walking every one of the
//! `m^N` return sequences, or by Monte Carlo over seeded paths.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::normalized_step;
use crate::drawdown::{gamma_interval, DrawdownCap, SupportBox};
use crate::error::{Error, Result};
use crate::market_data::ReturnPmf;
use crate::numeric::mean_and_stderr;

/// Largest `m^N` the exact evaluator will enumerate.
pub const ENUMERATION_BUDGET: f64 = 1e7;
/// `m^N` at or below which [`EvalMethod::Auto`] picks exact enumeration.
pub const AUTO_EXACT_LIMIT: f64 = 1e5;
pub const DEFAULT_GRID_POINTS: usize = 512;
pub const DEFAULT_PATHS: usize = 100_000;
pub const DEFAULT_SEED: u64 = 42;

/// Stored Monte-Carlo paths above this many draws are regenerated per grid
/// point instead of kept in memory.
const MAX_STORED_DRAWS: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveMode {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveEstimate {
    pub gamma: f64,
    /// Expected log growth, nats per period.
    pub value: f64,
    /// Standard error of the Monte-Carlo mean; 0 for exact values.
    pub stderr: f64,
    pub mode: ObjectiveMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub gamma_star: f64,
    pub g_star: f64,
    pub effective_interval: (f64, f64),
    pub curve: Vec<ObjectiveEstimate>,
}

impl OptimizationResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `gamma,J,stderr` rows over the grid.
    pub fn write_curve_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["gamma", "J", "stderr"])?;
        for e in &self.curve {
            wtr.write_record(&[e.gamma.to_string(), e.value.to_string(), e.stderr.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// How [`grid_search`] evaluates each grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMethod {
    /// Exact when `m^N <= AUTO_EXACT_LIMIT`, Monte Carlo otherwise.
    #[default]
    Auto,
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub grid_points: usize,
    pub paths: usize,
    pub seed: u64,
    pub method: EvalMethod,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { grid_points: DEFAULT_GRID_POINTS, paths: DEFAULT_PATHS, seed: DEFAULT_SEED, method: EvalMethod::Auto }
    }
}

/// The modulation gain set intersected with the cash-financing limit:
/// `|gamma| <= 1/d_max` for a modulated cap, `|gamma| <= 1` in the classical
/// limit, no extra limit without cash financing.
pub fn effective_interval(support: &SupportBox, cap: &DrawdownCap, cash_financed: bool) -> Result<(f64, f64)> {
    let (lo, hi) = gamma_interval(support)?;
    Ok(clip_to_cash(lo, hi, cap, cash_financed))
}

fn clip_to_cash(lo: f64, hi: f64, cap: &DrawdownCap, cash_financed: bool) -> (f64, f64) {
    if !cash_financed {
        return (lo, hi);
    }
    let limit = 1.0 / cap.modulator_sup();
    (lo.max(-limit), hi.min(limit))
}

/// Gain interval for a PMF. One-signed supports are only meaningful in the
/// classical limit, where the missing side simply imposes no bound.
fn pmf_interval(pmf: &ReturnPmf, cap: &DrawdownCap, cash_financed: bool) -> Result<(f64, f64)> {
    if pmf.has_two_sided_support() {
        return effective_interval(&SupportBox::from_pmf(pmf)?, cap, cash_financed);
    }
    if !cap.is_classical() {
        return Err(Error::SupportSign { x_min: pmf.x_min(), x_max: pmf.x_max() });
    }
    let lo = if pmf.x_max() > 0.0 { -1.0 / pmf.x_max() } else { f64::NEG_INFINITY };
    let hi = if pmf.x_min() < 0.0 { 1.0 / pmf.x_min().abs() } else { f64::INFINITY };
    Ok(clip_to_cash(lo, hi, cap, cash_financed))
}

fn check_gamma(gamma: f64, pmf: &ReturnPmf, cap: &DrawdownCap, cash_financed: bool) -> Result<()> {
    let (lo, hi) = pmf_interval(pmf, cap, cash_financed)?;
    let tol = |b: f64| 1e-12 * b.abs().max(1.0);
    if !gamma.is_finite() || gamma < lo - tol(lo) || gamma > hi + tol(hi) {
        return Err(Error::InadmissibleGain {
            gamma: vec![gamma],
            reason: format!("outside the effective interval [{lo}, {hi}]"),
        });
    }
    Ok(())
}

fn sequence_count(pmf: &ReturnPmf, horizon: usize) -> f64 {
    (pmf.atom_count() as f64).powf(horizon as f64)
}

/// Exact objective by enumerating every return sequence of length `horizon`.
///
/// Sequences share prefixes, so the walk visits each tree node once. The
/// result does not depend on `V(0)`: the account is tracked on the unit scale.
pub fn exact_objective(
    gamma: f64,
    pmf: &ReturnPmf,
    horizon: usize,
    cap: &DrawdownCap,
    cash_financed: bool,
) -> Result<ObjectiveEstimate> {
    if horizon == 0 {
        return Err(Error::ZeroHorizon);
    }
    let sequences = sequence_count(pmf, horizon);
    if sequences > ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded { sequences, budget: ENUMERATION_BUDGET });
    }
    check_gamma(gamma, pmf, cap, cash_financed)?;
    let total = enumerate(pmf.atoms(), gamma, cap, horizon, 1.0, 1.0, 1.0);
    Ok(ObjectiveEstimate { gamma, value: total / horizon as f64, stderr: 0.0, mode: ObjectiveMode::Exact })
}

/// Probability-weighted `log(w_N)` over all continuations of `(w, peak)`.
fn enumerate(
    atoms: &[(f64, f64)],
    gamma: f64,
    cap: &DrawdownCap,
    remaining: usize,
    w: f64,
    peak: f64,
    prob: f64,
) -> f64 {
    if remaining == 0 {
        return prob * w.ln();
    }
    let mut acc = 0.0;
    for &(x, p) in atoms {
        let (next, next_peak) = normalized_step(w, peak, gamma, cap, x);
        acc += if next > 0.0 {
            enumerate(atoms, gamma, cap, remaining - 1, next, next_peak, prob * p)
        } else {
            f64::NEG_INFINITY
        };
    }
    acc
}

/// `log(w_N) / N` for one path of atom indices.
fn path_growth(indices: &[u32], values: &[f64], gamma: f64, cap: &DrawdownCap) -> f64 {
    let (mut w, mut peak) = (1.0, 1.0);
    for &i in indices {
        (w, peak) = normalized_step(w, peak, gamma, cap, values[i as usize]);
        if !(w > 0.0) {
            return f64::NEG_INFINITY;
        }
    }
    w.ln() / indices.len() as f64
}

struct McSetup<'a> {
    pmf: &'a ReturnPmf,
    values: Vec<f64>,
    horizon: usize,
    paths: usize,
    seed: u64,
    stored: Option<Vec<u32>>,
}

impl<'a> McSetup<'a> {
    fn new(pmf: &'a ReturnPmf, horizon: usize, paths: usize, seed: u64, store: bool) -> Self {
        let values = pmf.values().collect();
        let stored = (store && paths.saturating_mul(horizon) <= MAX_STORED_DRAWS).then(|| {
            let sampler = pmf.sampler();
            let mut idx = vec![0u32; paths * horizon];
            idx.par_chunks_mut(horizon)
                .enumerate()
                .for_each(|(p, chunk)| sampler.fill_indices(seed, p as u64, chunk));
            idx
        });
        Self { pmf, values, horizon, paths, seed, stored }
    }

    /// Per-path growth in path-index order, then an order-fixed reduction,
    /// so the estimate is the same for any number of worker threads.
    fn estimate(&self, gamma: f64, cap: &DrawdownCap) -> ObjectiveEstimate {
        let growth: Vec<f64> = match &self.stored {
            Some(idx) => idx
                .par_chunks(self.horizon)
                .map(|path| path_growth(path, &self.values, gamma, cap))
                .collect(),
            None => {
                let sampler = self.pmf.sampler();
                (0..self.paths)
                    .into_par_iter()
                    .map_init(
                        || vec![0u32; self.horizon],
                        |buf, p| {
                            sampler.fill_indices(self.seed, p as u64, buf);
                            path_growth(buf, &self.values, gamma, cap)
                        },
                    )
                    .collect()
            }
        };
        let (value, stderr) = mean_and_stderr(&growth);
        ObjectiveEstimate { gamma, value, stderr, mode: ObjectiveMode::MonteCarlo }
    }
}

/// Monte-Carlo objective over `paths` seeded paths. Path `p` always uses
/// random stream `p` of `seed`.
pub fn mc_objective(
    gamma: f64,
    pmf: &ReturnPmf,
    horizon: usize,
    cap: &DrawdownCap,
    cash_financed: bool,
    paths: usize,
    seed: u64,
) -> Result<ObjectiveEstimate> {
    if horizon == 0 {
        return Err(Error::ZeroHorizon);
    }
    if paths < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 paths, got {paths}")));
    }
    check_gamma(gamma, pmf, cap, cash_financed)?;
    Ok(McSetup::new(pmf, horizon, paths, seed, false).estimate(gamma, cap))
}

/// Evenly spaced grid over `[lo, hi]`, both ends included.
fn grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let step = (hi - lo) / (points - 1) as f64;
    (0..points)
        .map(|i| if i == points - 1 { hi } else { lo + step * i as f64 })
        .collect()
}

/// Grid search for the gain maximizing the objective over the effective
/// interval. Ties go to the smaller `|gamma|`. Every Monte-Carlo grid point
/// reuses the same paths (common random numbers).
pub fn grid_search(
    pmf: &ReturnPmf,
    horizon: usize,
    cap: &DrawdownCap,
    cash_financed: bool,
    spec: &GridSpec,
) -> Result<OptimizationResult> {
    if spec.grid_points < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 grid points, got {}", spec.grid_points)));
    }
    if horizon == 0 {
        return Err(Error::ZeroHorizon);
    }
    let (lo, hi) = pmf_interval(pmf, cap, cash_financed)?;
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::EmptyInterval { lo, hi });
    }
    let gammas = grid(lo, hi, spec.grid_points);
    let exact = match spec.method {
        EvalMethod::Exact => true,
        EvalMethod::MonteCarlo => false,
        EvalMethod::Auto => sequence_count(pmf, horizon) <= AUTO_EXACT_LIMIT,
    };
    let curve: Vec<ObjectiveEstimate> = if exact {
        gammas
            .par_iter()
            .map(|&g| exact_objective(g, pmf, horizon, cap, cash_financed))
            .collect::<Result<_>>()?
    } else {
        if spec.paths < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 paths, got {}", spec.paths)));
        }
        let setup = McSetup::new(pmf, horizon, spec.paths, spec.seed, true);
        gammas.iter().map(|&g| setup.estimate(g, cap)).collect()
    };
    let best = curve
        .iter()
        .copied()
        .reduce(|best, e| {
            if e.value > best.value || (e.value == best.value && e.gamma.abs() < best.gamma.abs()) {
                e
            } else {
                best
            }
        })
        .expect("grid has at least two points");
    Ok(OptimizationResult { gamma_star: best.gamma, g_star: best.value, effective_interval: (lo, hi), curve })
}
