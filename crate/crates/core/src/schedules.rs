//! Performance measures, running statistics, learning rates and exploration
//! rates for the three parameter configurations.
//!
//! | mode            | `phi_{t,m}`                                  | `eta_t`                             | `eps_t`                 |
//! |-----------------|----------------------------------------------|-------------------------------------|-------------------------|
//! | `FullCentered`  | `l_m - sum_k p_k l_k`                        | `min(sqrt(W/V), W/D, 1/(-Phi))`     | 0                       |
//! | `FullMinShift`  | `l_m - min_k l_k`                            | `min(sqrt(W/V), W/D)`               | 0                       |
//! | `Bandit`        | `1[i=m] (l_{t,i} - l_{t-1,i_{t-1}}) / q_i`   | `min(sqrt(W/V), 1/D)`               | `min(1/2, sqrt(MW/t))`  |
//!
//! A term whose statistic is still zero is treated as `+inf`. While every
//! term is infinite the learning rate is *pending*: it is reported as
//! [`ETA_CAP`], every transition uses ratio 1, and the first finite value is
//! back-filled over the pending rounds. Past that point `eta` is the running
//! minimum of the formula, so it never increases.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Learning rate reported while every schedule term is degenerate.
pub const ETA_CAP: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    FullCentered,
    #[serde(rename = "full-minshift")]
    FullMinShift,
    Bandit,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::FullCentered, Mode::FullMinShift, Mode::Bandit];

    pub fn name(self) -> &'static str {
        match self {
            Mode::FullCentered => "full-centered",
            Mode::FullMinShift => "full-minshift",
            Mode::Bandit => "bandit",
        }
    }

    pub fn is_bandit(self) -> bool {
        self == Mode::Bandit
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full-centered" => Ok(Mode::FullCentered),
            "full-minshift" => Ok(Mode::FullMinShift),
            "bandit" => Ok(Mode::Bandit),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

pub fn phi_full_centered(losses: &[f64], p: &[f64]) -> Vec<f64> {
    let mean: f64 = losses.iter().zip(p).map(|(l, pm)| l * pm).sum();
    losses.iter().map(|l| l - mean).collect()
}

pub fn phi_full_minshift(losses: &[f64]) -> Vec<f64> {
    let min = losses.iter().copied().fold(f64::INFINITY, f64::min);
    losses.iter().map(|l| l - min).collect()
}

/// Importance-weighted change of the observed loss; zero off the played arm.
pub fn phi_bandit(observed_loss: f64, arm: usize, q: &[f64], prev_obs_loss: f64) -> Result<Vec<f64>> {
    let qa = q[arm];
    if qa <= 0.0 {
        return Err(Error::ZeroProbability { arm: arm + 1 });
    }
    let mut phi = vec![0.0; q.len()];
    phi[arm] = (observed_loss - prev_obs_loss) / qa;
    Ok(phi)
}

/// `min(1/2, sqrt(M W / t))`.
pub fn eps_bandit(round: usize, arms: usize, w_budget: f64) -> f64 {
    (arms as f64 * w_budget / round as f64).sqrt().min(0.5)
}

pub fn exploration(mode: Mode, round: usize, arms: usize, w_budget: f64) -> f64 {
    match mode {
        Mode::Bandit => eps_bandit(round, arms, w_budget),
        Mode::FullCentered | Mode::FullMinShift => 0.0,
    }
}

fn ratio_term(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

/// Raw schedule minimum from `(W, V, D, Phi)`; `+inf` when every term is
/// degenerate.
pub fn eta_terms(mode: Mode, w_budget: f64, v: f64, d: f64, phi_min: f64) -> f64 {
    let variance = ratio_term(w_budget.sqrt(), v.sqrt());
    match mode {
        Mode::FullCentered => {
            let guard = if phi_min < 0.0 { -1.0 / phi_min } else { f64::INFINITY };
            variance.min(ratio_term(w_budget, d)).min(guard)
        }
        Mode::FullMinShift => variance.min(ratio_term(w_budget, d)),
        Mode::Bandit => variance.min(ratio_term(1.0, d)),
    }
}

fn capped(raw: f64) -> f64 {
    if raw.is_finite() {
        raw
    } else {
        ETA_CAP
    }
}

/// Per-round `d_t` and `v_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundStats {
    pub d: f64,
    pub v: f64,
}

/// Learning rates used by one round's update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaStep {
    pub eta: f64,
    /// Rate for the exponential update of this round (`eta_{t-1}`).
    pub eta_prev: f64,
    /// `eta_t / eta_{t-1}` for the transition.
    pub ratio: f64,
    /// Set on the round the pending prefix resolves: number of earlier
    /// rounds whose reported rate was replaced.
    pub backfilled: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleState {
    mode: Mode,
    w_budget: f64,
    cum_v: f64,
    max_d: f64,
    min_phi: f64,
    eta_history: Vec<f64>,
    running: Option<f64>,
    prev_obs_loss: Option<f64>,
}

impl ScheduleState {
    pub fn new(mode: Mode, w_budget: f64) -> Result<Self> {
        if !(w_budget >= 0.0 && w_budget.is_finite()) {
            return Err(Error::Config(format!("complexity budget {w_budget} must be finite and nonnegative")));
        }
        Ok(ScheduleState {
            mode,
            w_budget,
            cum_v: 0.0,
            max_d: 0.0,
            min_phi: f64::INFINITY,
            eta_history: Vec::new(),
            running: None,
            prev_obs_loss: None,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn w_budget(&self) -> f64 {
        self.w_budget
    }

    /// `V_t`.
    pub fn cumulative_variance(&self) -> f64 {
        self.cum_v
    }

    /// `D_t`.
    pub fn max_range(&self) -> f64 {
        self.max_d
    }

    /// `Phi_t`; `+inf` before the first round.
    pub fn min_phi(&self) -> f64 {
        self.min_phi
    }

    /// Reported `eta_1..eta_t`, pending entries already back-filled.
    pub fn eta_history(&self) -> &[f64] {
        &self.eta_history
    }

    pub fn exploration(&self, round: usize, arms: usize) -> f64 {
        exploration(self.mode, round, arms, self.w_budget)
    }

    /// Returns `l_{t-1,i_{t-1}}` for the bandit estimator and records the
    /// current observation. On the first round the baseline is the observed
    /// loss itself, so `phi_1 = 0`.
    pub fn take_baseline(&mut self, observed: f64) -> f64 {
        let prev = self.prev_obs_loss.unwrap_or(observed);
        self.prev_obs_loss = Some(observed);
        prev
    }

    pub fn update_stats(&mut self, phi: &[f64], p: &[f64]) -> RoundStats {
        let max = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = phi.iter().copied().fold(f64::INFINITY, f64::min);
        let d = max - min;
        let v: f64 = phi.iter().zip(p).map(|(f, pm)| pm * f * f).sum();
        self.cum_v += v;
        self.max_d = self.max_d.max(d);
        self.min_phi = self.min_phi.min(min);
        RoundStats { d, v }
    }

    /// Raw formula for the current statistics with the cap applied.
    pub fn eta_formula(&self) -> f64 {
        capped(eta_terms(self.mode, self.w_budget, self.cum_v, self.max_d, self.min_phi))
    }

    /// Fixes `eta_t` after the round's statistics were added.
    pub fn advance_eta(&mut self) -> EtaStep {
        let raw = eta_terms(self.mode, self.w_budget, self.cum_v, self.max_d, self.min_phi);
        let step = match (self.running, raw.is_finite()) {
            (None, false) => EtaStep { eta: ETA_CAP, eta_prev: ETA_CAP, ratio: 1.0, backfilled: None },
            (None, true) => {
                let pending = self.eta_history.len();
                for e in &mut self.eta_history {
                    *e = raw;
                }
                self.running = Some(raw);
                EtaStep { eta: raw, eta_prev: raw, ratio: 1.0, backfilled: Some(pending) }
            }
            (Some(prev), _) => {
                let eta = if raw.is_finite() { prev.min(raw) } else { prev };
                self.running = Some(eta);
                let ratio = if prev > 0.0 { eta / prev } else { 1.0 };
                EtaStep { eta, eta_prev: prev, ratio, backfilled: None }
            }
        };
        self.eta_history.push(step.eta);
        step
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_examples() {
        assert_eq!(phi_full_centered(&[1.0, 1.0], &[0.3, 0.7]), vec![0.0, 0.0]);
        assert_eq!(phi_full_centered(&[0.0, 1.0], &[0.5, 0.5]), vec![-0.5, 0.5]);
    }

    #[test]
    fn minshift_examples() {
        assert_eq!(phi_full_minshift(&[3.0, 3.0, 3.0]), vec![0.0; 3]);
        assert_eq!(phi_full_minshift(&[2.0, 5.0]), vec![0.0, 3.0]);
        assert_eq!(phi_full_minshift(&[9.0, 12.0]), vec![0.0, 3.0]);
    }

    #[test]
    fn bandit_examples() {
        assert_eq!(phi_bandit(1.0, 0, &[0.5, 0.5], 0.0).unwrap(), vec![2.0, 0.0]);
        assert_eq!(phi_bandit(0.4, 1, &[0.5, 0.5], 0.4).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(phi_bandit(1.0, 1, &[1.0, 0.0], 0.0), Err(Error::ZeroProbability { arm: 2 })));
    }

    #[test]
    fn stats_examples() {
        let mut s = ScheduleState::new(Mode::FullCentered, 1.0).unwrap();
        assert_eq!(s.update_stats(&[0.0, 0.0], &[0.5, 0.5]), RoundStats { d: 0.0, v: 0.0 });
        assert_eq!(s.update_stats(&[-0.5, 0.5], &[0.5, 0.5]), RoundStats { d: 1.0, v: 0.25 });
        assert_eq!(s.update_stats(&[2.0, 0.0], &[0.5, 0.5]), RoundStats { d: 2.0, v: 2.0 });
        assert_eq!(s.cumulative_variance(), 2.25);
        assert_eq!(s.max_range(), 2.0);
        assert_eq!(s.min_phi(), -0.5);
    }

    #[test]
    fn eta_formula_examples() {
        assert_eq!(eta_terms(Mode::FullCentered, 1.0, 4.0, 1.0, 0.0), 0.5);
        assert_eq!(eta_terms(Mode::FullCentered, 1.0, 0.0, 0.0, 0.0), f64::INFINITY);
        assert!((eta_terms(Mode::FullCentered, 1.0, 0.01, 0.1, -2.0) - 0.5).abs() < 1e-15);
        assert_eq!(eta_terms(Mode::FullMinShift, 1.0, 4.0, 1.0, 0.0), 0.5);
        assert_eq!(eta_terms(Mode::FullMinShift, 1.0, 0.0, 0.0, 0.0), f64::INFINITY);
        assert_eq!(eta_terms(Mode::Bandit, 2.0, 8.0, 4.0, 0.0), 0.25);
        assert_eq!(capped(eta_terms(Mode::Bandit, 2.0, 0.0, 0.0, 0.0)), ETA_CAP);
    }

    #[test]
    fn first_degenerate_round_reports_cap() {
        let mut s = ScheduleState::new(Mode::FullMinShift, 1.0).unwrap();
        s.update_stats(&[0.0, 0.0], &[0.5, 0.5]);
        assert_eq!(s.eta_formula(), ETA_CAP);
        let step = s.advance_eta();
        assert_eq!((step.eta, step.ratio), (ETA_CAP, 1.0));
    }

    #[test]
    fn pending_prefix_is_backfilled() {
        let mut s = ScheduleState::new(Mode::FullMinShift, 1.0).unwrap();
        for _ in 0..3 {
            s.update_stats(&[0.0, 0.0], &[0.5, 0.5]);
            s.advance_eta();
        }
        s.update_stats(&[0.0, 0.1], &[0.5, 0.5]);
        let step = s.advance_eta();
        // V = 0.005, D = 0.1 -> min(sqrt(200), 10) = 10
        assert!((step.eta - 10.0).abs() < 1e-12);
        assert_eq!(step.ratio, 1.0);
        assert_eq!(step.backfilled, Some(3));
        assert!(s.eta_history().iter().all(|&e| (e - 10.0).abs() < 1e-12));
    }

    #[test]
    fn doubling_variance_gives_nonincreasing_eta() {
        let mut s = ScheduleState::new(Mode::FullMinShift, 1.0).unwrap();
        let mut last = f64::INFINITY;
        for k in 0..20 {
            let x = 2f64.powf(k as f64 / 2.0);
            s.update_stats(&[0.0, x], &[0.5, 0.5]);
            let step = s.advance_eta();
            assert!(step.eta <= last);
            last = step.eta;
        }
    }

    #[test]
    fn bandit_eta_times_range_at_most_one() {
        let mut s = ScheduleState::new(Mode::Bandit, 2.0).unwrap();
        for k in 1..50 {
            let phi = [0.0, (k as f64 * 0.37).sin() * 5.0, 0.0];
            let stats = s.update_stats(&phi, &[0.2, 0.5, 0.3]);
            let step = s.advance_eta();
            assert!(step.eta * stats.d <= 1.0 + 1e-12);
            assert!(step.eta * s.max_range() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn exploration_examples() {
        assert_eq!(eps_bandit(1, 4, 4f64.ln()), 0.5);
        // crossover at t = 4 M W = 48
        assert!((eps_bandit(48, 3, 4.0) - 0.5).abs() < 1e-15);
        let mut prev = 0.5;
        for t in 49..400 {
            let e = eps_bandit(t, 3, 4.0);
            assert!(e < prev);
            prev = e;
        }
        assert_eq!(exploration(Mode::FullCentered, 3, 4, 1.0), 0.0);
    }

    #[test]
    fn first_bandit_baseline_is_observation() {
        let mut s = ScheduleState::new(Mode::Bandit, 1.0).unwrap();
        assert_eq!(s.take_baseline(3.5), 3.5);
        assert_eq!(s.take_baseline(1.0), 3.5);
        assert_eq!(s.take_baseline(2.0), 1.0);
    }

    #[test]
    fn rejects_bad_budget() {
        assert!(ScheduleState::new(Mode::Bandit, -1.0).is_err());
        assert!(ScheduleState::new(Mode::Bandit, f64::INFINITY).is_err());
    }
}
