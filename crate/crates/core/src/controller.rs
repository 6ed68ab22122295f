//! The drawdown-modulated feedback law `I(k) = gamma * M(k) * V(k)` and
//! trajectory simulation under it.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::drawdown::{
    modulator, portfolio_gamma_admissible, update_state, AccountState, DrawdownCap, SupportBox,
    BOUNDARY_SLACK,
};
use crate::error::{Error, Result};

/// Feedback gain: one per asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gain {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Gain {
    pub fn as_slice(&self) -> &[f64] {
        match self {
            Gain::Scalar(g) => std::slice::from_ref(g),
            Gain::Vector(v) => v,
        }
    }

    pub fn len(&self) -> usize {
        self.as_slice().len()
    }

    pub fn is_empty(&self) -> bool {
        self.as_slice().is_empty()
    }

    /// Sum of `|gamma_i|`.
    pub fn gross(&self) -> f64 {
        self.as_slice().iter().map(|g| g.abs()).sum()
    }
}

/// Validated controller parameters.
///
/// The gain must satisfy the modulation constraint for `support`. With
/// `cash_financed` the gross position `sum |I_i|` may never exceed the account
/// value, which over all reachable drawdown states means
/// `sum |gamma_i| * sup M <= 1` (`sup M = d_max`, or 1 in the classical limit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    gain: Gain,
    cap: DrawdownCap,
    support: SupportBox,
    cash_financed: bool,
}

impl ControllerConfig {
    pub fn new(gain: Gain, cap: DrawdownCap, support: SupportBox, cash_financed: bool) -> Result<Self> {
        if gain.len() != support.len() {
            return Err(Error::LengthMismatch { expected: support.len(), got: gain.len() });
        }
        let g = gain.as_slice();
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::InadmissibleGain { gamma: g.to_vec(), reason: "not finite".into() });
        }
        if !portfolio_gamma_admissible(g, &support)? {
            return Err(Error::InadmissibleGain {
                gamma: g.to_vec(),
                reason: "outside the admissible gain set for the support box".into(),
            });
        }
        if cash_financed && gain.gross() * cap.modulator_sup() > 1.0 + BOUNDARY_SLACK {
            return Err(Error::InadmissibleGain {
                gamma: g.to_vec(),
                reason: format!(
                    "cash financing needs sum|gamma| <= {}",
                    1.0 / cap.modulator_sup()
                ),
            });
        }
        Ok(Self { gain, cap, support, cash_financed })
    }

    pub fn scalar(gamma: f64, cap: DrawdownCap, support: SupportBox, cash_financed: bool) -> Result<Self> {
        Self::new(Gain::Scalar(gamma), cap, support, cash_financed)
    }

    pub fn gain(&self) -> &Gain {
        &self.gain
    }

    pub fn cap(&self) -> &DrawdownCap {
        &self.cap
    }

    pub fn support(&self) -> &SupportBox {
        &self.support
    }

    pub fn cash_financed(&self) -> bool {
        self.cash_financed
    }

    /// Same gain and cap against another support box, revalidated.
    pub fn with_support(&self, support: SupportBox) -> Result<Self> {
        Self::new(self.gain.clone(), self.cap, support, self.cash_financed)
    }

    pub(crate) fn scalar_gamma(&self) -> Result<f64> {
        match self.gain {
            Gain::Scalar(g) => Ok(g),
            Gain::Vector(ref v) if v.len() == 1 => Ok(v[0]),
            Gain::Vector(ref v) => Err(Error::NotScalar(v.len())),
        }
    }
}

/// Per-asset investment `I_i = gamma_i * M(d) * V`.
pub fn investment(state: &AccountState, config: &ControllerConfig) -> Vec<f64> {
    let m = modulator(state.d(), &config.cap);
    config.gain.as_slice().iter().map(|g| g * m * state.v()).collect()
}

/// Account path produced by a simulation. Entry `k` holds the state at stage
/// `k` and the investment chosen from it; the final investment is the one the
/// controller would place next and is not applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub values: Vec<f64>,
    pub drawdowns: Vec<f64>,
    pub peaks: Vec<f64>,
    /// Per-asset investments at each stage.
    pub investments: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn terminal_value(&self) -> f64 {
        *self.values.last().expect("trajectory has at least the initial stage")
    }

    /// Net investment `sum_i I_i` at each stage.
    pub fn net_investments(&self) -> Vec<f64> {
        self.investments.iter().map(|i| i.iter().sum()).collect()
    }

    /// Writes `k,V,d,I,Vmax` rows; `I` is the net investment.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["k", "V", "d", "I", "Vmax"])?;
        for (k, i) in self.net_investments().iter().enumerate() {
            wtr.write_record(&[
                k.to_string(),
                self.values[k].to_string(),
                self.drawdowns[k].to_string(),
                i.to_string(),
                self.peaks[k].to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// One step on the unit-normalized account. Shared with the objective
/// evaluators so they reproduce `simulate` bit for bit.
#[inline]
pub(crate) fn normalized_step(w: f64, peak: f64, gamma: f64, cap: &DrawdownCap, x: f64) -> (f64, f64) {
    let d = (peak - w) / peak;
    let m = modulator(d, cap);
    let next = w + gamma * m * w * x;
    (next, if next > peak { next } else { peak })
}

fn check_support(support: &SupportBox, step: usize, asset: usize, x: f64) -> Result<()> {
    if support.contains(asset, x) {
        Ok(())
    } else {
        Err(Error::OutOfSupport {
            step,
            asset,
            value: x,
            lo: support.x_min()[asset],
            hi: support.x_max()[asset],
        })
    }
}

/// Runs the account on the unit scale and reports it scaled by `v0`, so the
/// drawdown series does not depend on `v0` at all.
fn run<F>(v0: f64, config: &ControllerConfig, horizon: usize, mut step_return: F) -> Result<Trajectory>
where
    F: FnMut(usize, &AccountState) -> Result<f64>,
{
    if !(v0 > 0.0) || !v0.is_finite() {
        return Err(Error::InvalidArgument(format!("initial capital {v0} must be positive")));
    }
    let mut state = AccountState::initial(1.0)?;
    let mut traj = Trajectory {
        values: Vec::with_capacity(horizon + 1),
        drawdowns: Vec::with_capacity(horizon + 1),
        peaks: Vec::with_capacity(horizon + 1),
        investments: Vec::with_capacity(horizon + 1),
    };
    let record = |traj: &mut Trajectory, state: &AccountState| {
        traj.values.push(v0 * state.v());
        traj.drawdowns.push(state.d());
        traj.peaks.push(v0 * state.v_max());
        traj.investments.push(investment(state, config).into_iter().map(|i| v0 * i).collect());
    };
    for k in 0..horizon {
        record(&mut traj, &state);
        let profit = step_return(k, &state)?;
        state = update_state(&state, profit)?;
    }
    record(&mut traj, &state);
    Ok(traj)
}

/// Single-asset simulation of `V(k+1) = V(k) + I(k) X(k)`.
///
/// Every return must lie inside the configured support box; the drawdown
/// guarantee says nothing about returns outside it.
pub fn simulate(v0: f64, config: &ControllerConfig, returns: &[f64]) -> Result<Trajectory> {
    let gamma = config.scalar_gamma()?;
    run(v0, config, returns.len(), |k, state| {
        let x = returns[k];
        check_support(&config.support, k, 0, x)?;
        let m = modulator(state.d(), &config.cap);
        Ok(gamma * m * state.v() * x)
    })
}

/// Portfolio simulation of `V(k+1) = V(k) + I(k)' X(k)`; `paths[i]` holds the
/// returns of asset `i`.
pub fn simulate_portfolio(v0: f64, config: &ControllerConfig, paths: &[Vec<f64>]) -> Result<Trajectory> {
    let gains = config.gain.as_slice();
    if paths.len() != gains.len() {
        return Err(Error::LengthMismatch { expected: gains.len(), got: paths.len() });
    }
    let horizon = paths.first().map_or(0, Vec::len);
    if let Some(p) = paths.iter().find(|p| p.len() != horizon) {
        return Err(Error::LengthMismatch { expected: horizon, got: p.len() });
    }
    run(v0, config, horizon, |k, state| {
        let m = modulator(state.d(), &config.cap);
        let mut profit = 0.0;
        for (i, (g, path)) in gains.iter().zip(paths).enumerate() {
            let x = path[k];
            check_support(&config.support, k, i, x)?;
            profit += g * m * state.v() * x;
        }
        Ok(profit)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drawdown::portfolio_admissible;
    use proptest::prelude::*;

    fn cfg(gamma: f64, d_max: f64, lo: f64, hi: f64) -> ControllerConfig {
        ControllerConfig::scalar(gamma, DrawdownCap::new(d_max).unwrap(), SupportBox::scalar(lo, hi).unwrap(), false)
            .unwrap()
    }

    #[test]
    fn investment_examples() {
        let c = cfg(11.15, 0.05, -0.049387, 0.157380);
        let s = AccountState::initial(10_000.0).unwrap();
        assert!((investment(&s, &c)[0] - 5_575.0).abs() < 1e-9);

        let at_cap = AccountState::new(9_500.0, 10_000.0).unwrap();
        assert_eq!(investment(&at_cap, &c)[0], 0.0);

        let classical = ControllerConfig::scalar(
            1.0,
            DrawdownCap::classical(),
            SupportBox::scalar(-0.05, 0.16).unwrap(),
            true,
        )
        .unwrap();
        assert_eq!(investment(&s, &classical), vec![10_000.0]);
    }

    #[test]
    fn config_validation() {
        let b = SupportBox::scalar(-0.05, 0.10).unwrap();
        let c = DrawdownCap::new(0.05).unwrap();
        assert!(ControllerConfig::scalar(20.0, c, b.clone(), true).is_ok());
        assert!(ControllerConfig::scalar(-10.0, c, b.clone(), true).is_ok());
        assert!(ControllerConfig::scalar(20.5, c, b.clone(), false).is_err());
        assert!(ControllerConfig::scalar(-10.5, c, b.clone(), false).is_err());
        // cash cap is 1/d_max = 20 against a wider gain set
        let wide = SupportBox::scalar(-0.02, 0.10).unwrap();
        assert!(ControllerConfig::scalar(30.0, c, wide.clone(), false).is_ok());
        assert!(ControllerConfig::scalar(30.0, c, wide.clone(), true).is_err());
        assert!(ControllerConfig::scalar(1.5, DrawdownCap::classical(), wide.clone(), true).is_err());
        assert!(ControllerConfig::scalar(1.5, DrawdownCap::classical(), wide, false).is_ok());
        assert!(ControllerConfig::new(Gain::Vector(vec![1.0, 1.0]), c, b, false).is_err());
    }

    #[test]
    fn zero_gain_is_flat() {
        let c = cfg(0.0, 0.05, -0.05, 0.10);
        let t = simulate(10_000.0, &c, &[0.1, -0.05, 0.02]).unwrap();
        assert_eq!(t.values, vec![10_000.0; 4]);
        assert_eq!(t.drawdowns, vec![0.0; 4]);
    }

    #[test]
    fn one_step_at_worst_return() {
        // I = 11.15 * 0.05 * 10000 = 5575; V(1) = 10000 - 5575 * 0.049387
        let c = cfg(11.15, 0.05, -0.049387, 0.157380);
        let t = simulate(10_000.0, &c, &[-0.049387]).unwrap();
        let expected_v = 10_000.0 - 5_575.0 * 0.049387;
        assert!((t.values[1] - expected_v).abs() < 1e-8);
        assert!((t.values[1] - 9_724.67).abs() < 0.01);
        assert!((t.drawdowns[1] - (10_000.0 - expected_v) / 10_000.0).abs() < 1e-12);
        assert!((t.drawdowns[1] - 0.02753).abs() < 1e-5);
        assert_eq!(t.len(), 2);
        assert!((t.investments[0][0] - 5_575.0).abs() < 1e-9);
    }

    #[test]
    fn out_of_support_rejected() {
        let c = cfg(5.0, 0.05, -0.05, 0.10);
        let err = simulate(1.0, &c, &[0.01, -0.06]).unwrap_err();
        assert!(matches!(err, Error::OutOfSupport { step: 1, asset: 0, .. }));
    }

    #[test]
    fn stop_loss_absorbs() {
        // dyadic values make the hit exact: 1 + 2 * 0.5 * (-0.5) = 0.5, d = 0.5
        let c = cfg(2.0, 0.5, -0.5, 0.5);
        let t = simulate(8.0, &c, &[-0.5, 0.5, -0.25, 0.5, 0.5]).unwrap();
        assert_eq!(t.drawdowns[1], 0.5);
        for k in 1..t.len() {
            assert_eq!(t.values[k], 4.0);
            assert_eq!(t.investments[k], vec![0.0]);
        }
    }

    #[test]
    fn classical_matches_constant_fraction() {
        let c = ControllerConfig::scalar(0.8, DrawdownCap::classical(), SupportBox::scalar(-0.1, 0.1).unwrap(), true)
            .unwrap();
        let xs = [0.05, -0.1, 0.1, 0.02, -0.03];
        let t = simulate(100.0, &c, &xs).unwrap();
        let mut v = 100.0;
        for (k, x) in xs.iter().enumerate() {
            v *= 1.0 + 0.8 * x;
            assert!(((t.values[k + 1] - v) / v).abs() < 1e-12);
        }
    }

    #[test]
    fn trajectory_csv_layout() {
        let c = cfg(2.0, 0.5, -0.5, 0.5);
        let t = simulate(8.0, &c, &[-0.5]).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "k,V,d,I,Vmax\n0,8,0,8,8\n1,4,0.5,0,8\n");
    }

    #[test]
    fn portfolio_split_gain_equals_scalar() {
        let b1 = SupportBox::scalar(-0.05, 0.1).unwrap();
        let cap = DrawdownCap::new(0.1).unwrap();
        let scalar = ControllerConfig::scalar(12.0, cap, b1, false).unwrap();
        let xs = vec![0.1, -0.05, -0.05, 0.03, -0.02, 0.1];
        let ts = simulate(1_000.0, &scalar, &xs).unwrap();
        for n in [2usize, 3, 4] {
            let b = SupportBox::new(vec![-0.05; n], vec![0.1; n]).unwrap();
            let pc = ControllerConfig::new(Gain::Vector(vec![12.0 / n as f64; n]), cap, b, false).unwrap();
            let tp = simulate_portfolio(1_000.0, &pc, &vec![xs.clone(); n]).unwrap();
            for k in 0..ts.len() {
                assert!((ts.values[k] - tp.values[k]).abs() <= 1e-12 * ts.values[k]);
                assert!((ts.drawdowns[k] - tp.drawdowns[k]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn portfolio_zero_gain_flat() {
        let b = SupportBox::new(vec![-0.05, -0.1], vec![0.1, 0.2]).unwrap();
        let pc = ControllerConfig::new(Gain::Vector(vec![0.0, 0.0]), DrawdownCap::new(0.1).unwrap(), b, false).unwrap();
        let t = simulate_portfolio(5.0, &pc, &[vec![0.1, -0.05], vec![-0.1, 0.2]]).unwrap();
        assert_eq!(t.values, vec![5.0; 3]);
    }

    #[test]
    fn portfolio_two_steps_by_hand() {
        // gamma = (4, 2), d_max = 0.1, box x_min = (-0.05, -0.1), x_max = (0.1, 0.2)
        // step 0: M = 0.1, V = 100, I = (40, 20)
        //   returns (0.1, -0.1): profit = 4 - 2 = 2 -> V = 102, new peak
        // step 1: M = 0.1, I = (40.8, 20.4)
        //   returns (-0.05, -0.1): profit = -2.04 - 2.04 = -4.08 -> V = 97.92, d = 0.04
        let b = SupportBox::new(vec![-0.05, -0.1], vec![0.1, 0.2]).unwrap();
        let pc = ControllerConfig::new(Gain::Vector(vec![4.0, 2.0]), DrawdownCap::new(0.1).unwrap(), b, false).unwrap();
        let t = simulate_portfolio(100.0, &pc, &[vec![0.1, -0.05], vec![-0.1, -0.1]]).unwrap();
        assert!((t.values[1] - 102.0).abs() < 1e-12);
        assert!((t.values[2] - 97.92).abs() < 1e-12);
        assert!((t.drawdowns[2] - 0.04).abs() < 1e-12);
        assert!((t.investments[1][0] - 40.8).abs() < 1e-12);
        assert!((t.investments[1][1] - 20.4).abs() < 1e-12);
        // at the boundary the worst-case vertex (-0.05, -0.1) would cost exactly M V
        let worst_gain = ControllerConfig::new(
            Gain::Vector(vec![10.0, 5.0]),
            DrawdownCap::new(0.1).unwrap(),
            SupportBox::new(vec![-0.05, -0.1], vec![0.1, 0.2]).unwrap(),
            false,
        )
        .unwrap();
        let t = simulate_portfolio(100.0, &worst_gain, &[vec![-0.05], vec![-0.1]]).unwrap();
        assert!((t.drawdowns[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn portfolio_mismatched_horizons() {
        let b = SupportBox::new(vec![-0.05, -0.1], vec![0.1, 0.2]).unwrap();
        let pc = ControllerConfig::new(Gain::Vector(vec![1.0, 1.0]), DrawdownCap::new(0.1).unwrap(), b, false).unwrap();
        assert!(simulate_portfolio(1.0, &pc, &[vec![0.1], vec![0.1, 0.1]]).is_err());
        assert!(simulate_portfolio(1.0, &pc, &[vec![0.1]]).is_err());
    }

    proptest! {
        #[test]
        fn scale_equivariance(
            gamma in -6.0f64..20.0,
            xs in prop::collection::vec(-0.05f64..0.15, 1..40),
            c in 0.001f64..1e6,
        ) {
            let conf = cfg(gamma, 0.05, -0.05, 0.15);
            let a = simulate(1.0, &conf, &xs).unwrap();
            let b = simulate(c, &conf, &xs).unwrap();
            prop_assert_eq!(&a.drawdowns, &b.drawdowns);
            for k in 0..a.len() {
                prop_assert!((b.values[k] - c * a.values[k]).abs() <= 1e-12 * b.values[k]);
            }
        }

        #[test]
        fn guarantee_and_cash_on_random_paths(
            gamma in -6.66f64..20.0,
            dm in 0.01f64..0.9,
            xs in prop::collection::vec(-0.05f64..0.15, 1..60),
        ) {
            let b = SupportBox::scalar(-0.05, 0.15).unwrap();
            let cap = DrawdownCap::new(dm).unwrap();
            let cash = gamma.abs() * dm <= 1.0;
            let conf = ControllerConfig::scalar(gamma, cap, b.clone(), cash).unwrap();
            let t = simulate(100.0, &conf, &xs).unwrap();
            let summary = crate::drawdown::drawdown_series(&t.values).unwrap();
            for k in 0..t.len() {
                prop_assert!(t.drawdowns[k] <= dm + 1e-12);
                prop_assert!(t.values[k] > 0.0);
                prop_assert!((t.drawdowns[k] - summary.d_series[k]).abs() <= 1e-10);
                let s = AccountState::new(t.values[k], t.peaks[k]).unwrap();
                prop_assert!(portfolio_admissible(&t.investments[k], &s, &cap, &b).unwrap());
                if cash {
                    prop_assert!(t.investments[k][0].abs() <= t.values[k] * (1.0 + 1e-12));
                }
            }
        }

        #[test]
        fn normalized_step_matches_simulate(
            gamma in -6.0f64..20.0,
            xs in prop::collection::vec(-0.05f64..0.15, 1..30),
        ) {
            let conf = cfg(gamma, 0.05, -0.05, 0.15);
            let t = simulate(1.0, &conf, &xs).unwrap();
            let (mut w, mut peak) = (1.0, 1.0);
            for x in &xs {
                (w, peak) = normalized_step(w, peak, gamma, conf.cap(), *x);
            }
            prop_assert_eq!(w, t.terminal_value());
            prop_assert_eq!(peak, *t.peaks.last().unwrap());
        }
    }
}
