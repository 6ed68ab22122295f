//! High-water-mark drawdown bookkeeping and the drawdown modulation bounds.
//!
//! With account value `V(k)`, running peak `V_max(k)` and percentage drawdown
//! `d(k) = (V_max - V) / V_max`, an investment `I(k)` keeps `d` at or below
//! `d_max` on every path iff
//!
//! ```text
//! -M(k) V(k) / x_max  <=  I(k)  <=  M(k) V(k) / |x_min|,   M(k) = (d_max - d(k)) / (1 - d(k))
//! ```
//!
//! and for a portfolio iff `|x_min|' I+ - x_max' I- <= M(k) V(k)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::ReturnPmf;

/// Relative slack on the closed admissibility boundaries.
pub const BOUNDARY_SLACK: f64 = 1e-12;

/// Account value, running peak and percentage drawdown.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccountState {
    v: f64,
    v_max: f64,
    d: f64,
}

impl AccountState {
    /// Fresh account at its own peak.
    pub fn initial(v0: f64) -> Result<Self> {
        Self::new(v0, v0)
    }

    pub fn new(v: f64, v_max: f64) -> Result<Self> {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidState(format!("value {v} must be positive")));
        }
        if !(v_max >= v) || !v_max.is_finite() {
            return Err(Error::InvalidState(format!("peak {v_max} below value {v}")));
        }
        let d = (v_max - v) / v_max;
        if d >= 1.0 {
            return Err(Error::InvalidState(format!("drawdown {d} not below 1")));
        }
        Ok(Self { v, v_max, d })
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn d(&self) -> f64 {
        self.d
    }
}

/// Applies one period's profit and moves the high-water mark.
pub fn update_state(state: &AccountState, profit: f64) -> Result<AccountState> {
    let v = state.v + profit;
    if !(v > 0.0) {
        return Err(Error::Ruin { value: v });
    }
    if v > state.v_max {
        return Ok(AccountState { v, v_max: v, d: 0.0 });
    }
    let d = (state.v_max - v) / state.v_max;
    if d >= 1.0 {
        return Err(Error::Ruin { value: v });
    }
    Ok(AccountState { v, v_max: state.v_max, d })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawdownSummary {
    pub d_series: Vec<f64>,
    /// Largest percentage drawdown over the series.
    pub overall_pct_dd: f64,
    /// Largest currency drop from a running peak.
    pub max_abs_dd: f64,
}

/// Drawdown statistics of a value series. Peaks include the current point,
/// so `d_series[0]` is always 0.
pub fn drawdown_series(values: &[f64]) -> Result<DrawdownSummary> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("drawdown_series needs at least one value".into()));
    }
    let mut peak = f64::NEG_INFINITY;
    let mut d_series = Vec::with_capacity(values.len());
    let mut overall_pct_dd = 0.0f64;
    let mut max_abs_dd = 0.0f64;
    for (k, &v) in values.iter().enumerate() {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidArgument(format!("value {v} at index {k} is not positive")));
        }
        if v > peak {
            peak = v;
        }
        let drop = peak - v;
        let d = drop / peak;
        d_series.push(d);
        overall_pct_dd = overall_pct_dd.max(d);
        max_abs_dd = max_abs_dd.max(drop);
    }
    Ok(DrawdownSummary { d_series, overall_pct_dd, max_abs_dd })
}

/// Maximum acceptable percentage drawdown.
///
/// The classical limit stands for `d_max -> 1`, where the modulator is
/// identically one and the controller reduces to a constant-fraction bet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrawdownCap {
    d_max: f64,
    classical_limit: bool,
}

impl DrawdownCap {
    pub fn new(d_max: f64) -> Result<Self> {
        if !(d_max > 0.0 && d_max < 1.0) {
            return Err(Error::InvalidCap(d_max));
        }
        Ok(Self { d_max, classical_limit: false })
    }

    pub fn classical() -> Self {
        Self { d_max: 1.0, classical_limit: true }
    }

    /// The cap level; 1 in the classical limit.
    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    pub fn is_classical(&self) -> bool {
        self.classical_limit
    }

    /// Largest value the modulator can take (attained at zero drawdown).
    pub fn modulator_sup(&self) -> f64 {
        if self.classical_limit {
            1.0
        } else {
            self.d_max
        }
    }
}

/// `M = max(0, (d_max - d) / (1 - d))`, or 1 in the classical limit.
///
/// The clamp at zero covers rounding that leaves `d` a hair above `d_max`.
pub fn modulator(d: f64, cap: &DrawdownCap) -> f64 {
    if cap.classical_limit {
        return 1.0;
    }
    ((cap.d_max - d) / (1.0 - d)).max(0.0)
}

/// Per-asset return bounds `-1 < x_min_i < 0 < x_max_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportBox {
    x_min: Vec<f64>,
    x_max: Vec<f64>,
}

impl SupportBox {
    pub fn new(x_min: Vec<f64>, x_max: Vec<f64>) -> Result<Self> {
        if x_min.len() != x_max.len() {
            return Err(Error::LengthMismatch { expected: x_min.len(), got: x_max.len() });
        }
        if x_min.is_empty() {
            return Err(Error::InvalidArgument("support box needs at least one asset".into()));
        }
        for (&lo, &hi) in x_min.iter().zip(&x_max) {
            if !(lo > -1.0 && lo < 0.0 && hi > 0.0 && hi.is_finite()) {
                return Err(Error::SupportSign { x_min: lo, x_max: hi });
            }
        }
        Ok(Self { x_min, x_max })
    }

    pub fn scalar(x_min: f64, x_max: f64) -> Result<Self> {
        Self::new(vec![x_min], vec![x_max])
    }

    pub fn from_pmf(pmf: &ReturnPmf) -> Result<Self> {
        Self::scalar(pmf.x_min(), pmf.x_max())
    }

    pub fn x_min(&self) -> &[f64] {
        &self.x_min
    }

    pub fn x_max(&self) -> &[f64] {
        &self.x_max
    }

    pub fn len(&self) -> usize {
        self.x_min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_min.is_empty()
    }

    pub fn contains(&self, asset: usize, x: f64) -> bool {
        x >= self.x_min[asset] && x <= self.x_max[asset]
    }

    /// Scalar `(x_min, x_max)`; errors for multi-asset boxes.
    pub fn as_scalar(&self) -> Result<(f64, f64)> {
        if self.len() != 1 {
            return Err(Error::NotScalar(self.len()));
        }
        Ok((self.x_min[0], self.x_max[0]))
    }

    /// Smallest box containing both this box and the given per-asset
    /// extremes. Returns the box and whether anything moved.
    pub fn widened(&self, lows: &[f64], highs: &[f64]) -> Result<(Self, bool)> {
        if lows.len() != self.len() || highs.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got: lows.len().min(highs.len()) });
        }
        let x_min: Vec<f64> = self.x_min.iter().zip(lows).map(|(a, b)| a.min(*b)).collect();
        let x_max: Vec<f64> = self.x_max.iter().zip(highs).map(|(a, b)| a.max(*b)).collect();
        let changed = x_min != self.x_min || x_max != self.x_max;
        Ok((Self::new(x_min, x_max)?, changed))
    }

    /// The `2^n` corners of the return hypercube, in binary order over the
    /// assets (bit `i` set picks `x_max_i`).
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        (0..1usize << n)
            .map(|mask| {
                (0..n)
                    .map(|i| if mask >> i & 1 == 1 { self.x_max[i] } else { self.x_min[i] })
                    .collect()
            })
            .collect()
    }
}

/// Closed interval of admissible single-asset investments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvestmentInterval {
    pub lower: f64,
    pub upper: f64,
    slack_lower: f64,
    slack_upper: f64,
}

impl InvestmentInterval {
    /// Membership with the same `1e-12 * V` slack, mapped through the bound
    /// algebra, that [`portfolio_admissible`] applies.
    pub fn contains(&self, investment: f64) -> bool {
        investment >= self.lower - self.slack_lower && investment <= self.upper + self.slack_upper
    }
}

/// Investment bounds from the modulation lemma for a single asset.
pub fn scalar_bounds(state: &AccountState, cap: &DrawdownCap, support: &SupportBox) -> Result<InvestmentInterval> {
    let (x_min, x_max) = support.as_scalar()?;
    let m = modulator(state.d, cap);
    let loss_per_unit = x_min.abs();
    Ok(InvestmentInterval {
        lower: -m * state.v / x_max,
        upper: m * state.v / loss_per_unit,
        slack_lower: BOUNDARY_SLACK * state.v / x_max,
        slack_upper: BOUNDARY_SLACK * state.v / loss_per_unit,
    })
}

/// Worst-case one-step loss `|x_min|' I+ - x_max' I-`.
fn worst_case_loss(weights: &[f64], support: &SupportBox) -> f64 {
    weights
        .iter()
        .zip(support.x_min.iter().zip(&support.x_max))
        .map(|(&w, (&lo, &hi))| if w >= 0.0 { lo.abs() * w } else { -hi * w })
        .sum()
}

/// Generalized modulation test: `|x_min|' I+ - x_max' I- <= M V` (plus slack).
pub fn portfolio_admissible(
    investment: &[f64],
    state: &AccountState,
    cap: &DrawdownCap,
    support: &SupportBox,
) -> Result<bool> {
    if investment.len() != support.len() {
        return Err(Error::LengthMismatch { expected: support.len(), got: investment.len() });
    }
    let m = modulator(state.d, cap);
    let loss = worst_case_loss(investment, support);
    Ok(loss <= m * state.v + BOUNDARY_SLACK * state.v)
}

/// Admissible scalar gains `[-1/x_max, 1/|x_min|]`.
pub fn gamma_interval(support: &SupportBox) -> Result<(f64, f64)> {
    let (x_min, x_max) = support.as_scalar()?;
    Ok((-1.0 / x_max, 1.0 / x_min.abs()))
}

/// Vector-gain condition `|x_min|' gamma+ - x_max' gamma- <= 1`.
pub fn portfolio_gamma_admissible(gamma: &[f64], support: &SupportBox) -> Result<bool> {
    if gamma.len() != support.len() {
        return Err(Error::LengthMismatch { expected: support.len(), got: gamma.len() });
    }
    Ok(worst_case_loss(gamma, support) <= 1.0 + BOUNDARY_SLACK)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn st(v: f64, v_max: f64) -> AccountState {
        AccountState::new(v, v_max).unwrap()
    }

    fn cap(d: f64) -> DrawdownCap {
        DrawdownCap::new(d).unwrap()
    }

    #[test]
    fn update_new_peak_resets() {
        let s = update_state(&st(10_000.0, 10_000.0), 500.0).unwrap();
        assert_eq!((s.v(), s.v_max(), s.d()), (10_500.0, 10_500.0, 0.0));
    }

    #[test]
    fn update_loss_then_partial_recovery() {
        let s = update_state(&st(10_000.0, 10_000.0), -500.0).unwrap();
        assert_eq!((s.v(), s.v_max()), (9_500.0, 10_000.0));
        assert!((s.d() - 0.05).abs() < 1e-15);
        let s = update_state(&s, 200.0).unwrap();
        assert_eq!((s.v(), s.v_max()), (9_700.0, 10_000.0));
        assert!((s.d() - 0.03).abs() < 1e-15);
    }

    #[test]
    fn update_ruin() {
        assert!(matches!(update_state(&st(100.0, 100.0), -100.0), Err(Error::Ruin { .. })));
        assert!(matches!(update_state(&st(100.0, 200.0), -150.0), Err(Error::Ruin { .. })));
    }

    #[test]
    fn invalid_states_rejected() {
        assert!(AccountState::new(0.0, 1.0).is_err());
        assert!(AccountState::new(2.0, 1.0).is_err());
        assert!(AccountState::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn series_example() {
        let s = drawdown_series(&[10.0, 12.0, 6.0, 9.0, 13.0]).unwrap();
        assert_eq!(s.d_series, vec![0.0, 0.0, 0.5, 0.25, 0.0]);
        assert_eq!(s.overall_pct_dd, 0.5);
        assert_eq!(s.max_abs_dd, 6.0);
    }

    #[test]
    fn series_monotone_and_errors() {
        let s = drawdown_series(&[1.0, 2.0, 3.0, 3.5]).unwrap();
        assert_eq!((s.overall_pct_dd, s.max_abs_dd), (0.0, 0.0));
        assert!(drawdown_series(&[]).is_err());
        assert!(drawdown_series(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn modulator_examples() {
        let c = cap(0.05);
        assert_eq!(modulator(0.0, &c), 0.05);
        assert_eq!(modulator(0.05, &c), 0.0);
        assert!((modulator(0.02, &c) - 0.03 / 0.98).abs() < 1e-15);
        assert!((modulator(0.02, &c) - 0.0306122).abs() < 1e-7);
        // overshoot clamps
        assert_eq!(modulator(0.0500001, &c), 0.0);
        assert_eq!(modulator(0.7, &DrawdownCap::classical()), 1.0);
    }

    #[test]
    fn cap_validation() {
        assert!(DrawdownCap::new(0.0).is_err());
        assert!(DrawdownCap::new(1.0).is_err());
        assert!(DrawdownCap::new(f64::NAN).is_err());
        assert!(DrawdownCap::classical().is_classical());
    }

    #[test]
    fn scalar_bounds_examples() {
        let b = SupportBox::scalar(-0.05, 0.10).unwrap();
        let i = scalar_bounds(&st(10_000.0, 10_000.0), &cap(0.05), &b).unwrap();
        assert!((i.lower + 5_000.0).abs() < 1e-9);
        assert!((i.upper - 10_000.0).abs() < 1e-9);

        // at the cap the interval collapses to {0}
        let s = st(9_500.0, 10_000.0);
        let i = scalar_bounds(&s, &DrawdownCap::new(s.d()).unwrap(), &b).unwrap();
        assert_eq!((i.lower, i.upper), (-0.0, 0.0));
    }

    #[test]
    fn scalar_bounds_reported_support() {
        let b = SupportBox::scalar(-0.049387, 0.157380).unwrap();
        let i = scalar_bounds(&st(10_000.0, 10_000.0), &cap(0.05), &b).unwrap();
        assert!((i.upper / 10_000.0 - 1.0124).abs() < 1e-4);
        assert!((i.lower / 10_000.0 + 0.3177).abs() < 1e-4);
        assert!((i.upper / 10_000.0 / 0.05 - 20.248).abs() < 1e-3);
        assert!((i.lower / 10_000.0 / 0.05 + 6.354).abs() < 1e-3);
    }

    #[test]
    fn scalar_bounds_needs_scalar_box() {
        let b = SupportBox::new(vec![-0.1, -0.1], vec![0.1, 0.1]).unwrap();
        assert_eq!(scalar_bounds(&st(1.0, 1.0), &cap(0.1), &b), Err(Error::NotScalar(2)));
    }

    #[test]
    fn portfolio_examples() {
        let b = SupportBox::new(vec![-0.05, -0.10], vec![0.10, 0.20]).unwrap();
        let s = st(100.0, 100.0);
        assert!(portfolio_admissible(&[0.0, 0.0], &s, &cap(0.1), &b).unwrap());
        assert!(portfolio_admissible(&[100.0, 50.0], &s, &cap(0.1), &b).unwrap());
        assert!(!portfolio_admissible(&[100.1, 50.0], &s, &cap(0.1), &b).unwrap());
        assert!(portfolio_admissible(&[1.0], &s, &cap(0.1), &b).is_err());
    }

    #[test]
    fn gamma_interval_examples() {
        let g = gamma_interval(&SupportBox::scalar(-0.5, 0.5).unwrap()).unwrap();
        assert_eq!(g, (-2.0, 2.0));
        let g = gamma_interval(&SupportBox::scalar(-0.05, 0.10).unwrap()).unwrap();
        assert!((g.0 + 10.0).abs() < 1e-12 && (g.1 - 20.0).abs() < 1e-12);
        let g = gamma_interval(&SupportBox::scalar(-0.049387, 0.157380).unwrap()).unwrap();
        assert!((g.0 + 6.354).abs() < 1e-3 && (g.1 - 20.248).abs() < 1e-3);
    }

    #[test]
    fn portfolio_gamma_examples() {
        let b1 = SupportBox::scalar(-0.08, 0.1).unwrap();
        assert!(portfolio_gamma_admissible(&[0.0], &b1).unwrap());
        assert!(portfolio_gamma_admissible(&[1.0 / 0.08], &b1).unwrap());
        assert!(!portfolio_gamma_admissible(&[1.01 / 0.08], &b1).unwrap());
        let b2 = SupportBox::new(vec![-0.05, -0.10], vec![0.10, 0.20]).unwrap();
        assert!(portfolio_gamma_admissible(&[10.0, 5.0], &b2).unwrap());
        assert!(!portfolio_gamma_admissible(&[10.0, 5.1], &b2).unwrap());
        assert!(portfolio_gamma_admissible(&[10.0], &b2).is_err());
    }

    #[test]
    fn vertices_cover_corners() {
        let b = SupportBox::new(vec![-0.1, -0.2], vec![0.3, 0.4]).unwrap();
        assert_eq!(
            b.vertices(),
            vec![vec![-0.1, -0.2], vec![0.3, -0.2], vec![-0.1, 0.4], vec![0.3, 0.4]]
        );
    }

    #[test]
    fn widening() {
        let b = SupportBox::scalar(-0.05, 0.1).unwrap();
        let (w, moved) = b.widened(&[-0.08], &[0.09]).unwrap();
        assert!(moved);
        assert_eq!(w.as_scalar().unwrap(), (-0.08, 0.1));
        let (_, moved) = b.widened(&[-0.01], &[0.01]).unwrap();
        assert!(!moved);
    }

    fn state_strategy() -> impl Strategy<Value = (f64, f64)> {
        (1.0f64..1e6, 0.0f64..0.95).prop_map(|(peak, d)| (peak * (1.0 - d), peak))
    }

    proptest! {
        #[test]
        fn modulator_range(d in 0.0f64..0.999, dm in 0.001f64..0.999) {
            let c = cap(dm);
            let m = modulator(d, &c);
            prop_assert!((0.0..=dm).contains(&m));
            if d >= dm { prop_assert_eq!(m, 0.0); }
            if d == 0.0 { prop_assert_eq!(m, dm); }
        }

        #[test]
        fn bounds_contain_zero_and_scale((v, vm) in state_strategy(), dm in 0.01f64..0.99,
                                         lo in -0.99f64..-0.001, hi in 0.001f64..3.0, c in 0.01f64..100.0) {
            let b = SupportBox::scalar(lo, hi).unwrap();
            let i = scalar_bounds(&st(v, vm), &cap(dm), &b).unwrap();
            prop_assert!(i.lower <= 0.0 && i.upper >= 0.0);
            let j = scalar_bounds(&st(c * v, c * vm), &cap(dm), &b).unwrap();
            prop_assert!((j.upper - c * i.upper).abs() <= 1e-9 * (1.0 + c * i.upper.abs()));
            prop_assert!((j.lower - c * i.lower).abs() <= 1e-9 * (1.0 + c * i.lower.abs()));
        }

        #[test]
        fn new_peak_resets_exactly(v in 1.0f64..1e6, gain in 1e-6f64..1e3) {
            let s = update_state(&st(v, v), gain).unwrap();
            prop_assert_eq!(s.d(), 0.0);
            prop_assert_eq!(s.v_max(), s.v());
        }

        #[test]
        fn series_bounds(values in prop::collection::vec(0.01f64..1e4, 1..50)) {
            let s = drawdown_series(&values).unwrap();
            prop_assert!(s.overall_pct_dd >= 0.0 && s.overall_pct_dd < 1.0);
            prop_assert_eq!(s.d_series[0], 0.0);
        }
    }
}
