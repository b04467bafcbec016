//! Closed-form regret bounds and their reports.

use serde::{Deserialize, Serialize};

use crate::environments::Ranges;
use crate::schedules::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundId {
    /// Centered full-feedback bound: `2(1+W) max Delta + 2 sqrt(W sum Delta^2)`.
    Centered,
    /// Min-shifted full-feedback bound: `6 sqrt(W sum Delta^2)`.
    MinShift,
    /// Uniform-range corollary: `6 Delta sqrt(W T)`.
    MinShiftUniform,
    /// Bandit bound with the range-dependent exploration term spelled out.
    Bandit,
    /// [`BoundId::Bandit`] with every range replaced by the largest one.
    BanditUniform,
}

impl BoundId {
    pub const ALL: [BoundId; 5] = [
        BoundId::Centered,
        BoundId::MinShift,
        BoundId::MinShiftUniform,
        BoundId::Bandit,
        BoundId::BanditUniform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundId::Centered => "Centered",
            BoundId::MinShift => "MinShift",
            BoundId::MinShiftUniform => "MinShiftUniform",
            BoundId::Bandit => "Bandit",
            BoundId::BanditUniform => "BanditUniform",
        }
    }

    /// Bounds that apply to a learner running `mode`.
    pub fn for_mode(mode: Mode) -> &'static [BoundId] {
        match mode {
            Mode::FullCentered => &[BoundId::Centered],
            Mode::FullMinShift => &[BoundId::MinShift, BoundId::MinShiftUniform],
            Mode::Bandit => &[BoundId::Bandit, BoundId::BanditUniform],
        }
    }
}

impl std::fmt::Display for BoundId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundInputs {
    pub w: f64,
    pub arms: usize,
    /// `Delta_t` for `t = 1..=T`.
    pub delta: Vec<f64>,
    /// `Delta~_t` for `t = 1..=T`.
    pub extended: Vec<f64>,
}

impl BoundInputs {
    pub fn new(w: f64, arms: usize, ranges: &Ranges) -> Self {
        BoundInputs { w, arms, delta: ranges.delta.clone(), extended: ranges.extended.clone() }
    }

    pub fn horizon(&self) -> usize {
        self.delta.len()
    }
}

/// Right-hand side together with its named additive terms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundValue {
    pub rhs: f64,
    pub terms: Vec<(String, f64)>,
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(0.0, f64::max)
}

fn sum_sq(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum()
}

/// Number of leading sorted ranges charged to exploration:
/// `ceil(sqrt(T / (M W)))`, capped at `T` (and equal to `T` when `W = 0`).
pub fn exploration_prefix(horizon: usize, arms: usize, w: f64) -> usize {
    let mw = arms as f64 * w;
    if mw <= 0.0 {
        return horizon;
    }
    ((horizon as f64 / mw).sqrt().ceil() as usize).min(horizon)
}

fn bandit_terms(w: f64, arms: usize, extended: &[f64]) -> BoundValue {
    let m = arms as f64;
    let horizon = extended.len();
    let s2 = sum_sq(extended);
    let log_et = if horizon == 0 { 0.0 } else { 1.0 + (horizon as f64).ln() };
    let main = 4.0 * (2.0 * m * w * s2).sqrt();
    let estimator = (m * w * log_et * s2).sqrt();
    let mut sorted = extended.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let k = exploration_prefix(horizon, arms, w);
    let exploration = 2.0 * w * m * sorted.iter().take(k).sum::<f64>();
    BoundValue {
        rhs: main + estimator + exploration,
        terms: vec![
            ("variance".into(), main),
            ("estimator".into(), estimator),
            ("exploration".into(), exploration),
        ],
    }
}

pub fn bound_rhs(id: BoundId, inputs: &BoundInputs) -> BoundValue {
    let w = inputs.w;
    match id {
        BoundId::Centered => {
            let a = 2.0 * (1.0 + w) * max_of(&inputs.delta);
            let b = 2.0 * (w * sum_sq(&inputs.delta)).sqrt();
            BoundValue { rhs: a + b, terms: vec![("range".into(), a), ("variance".into(), b)] }
        }
        BoundId::MinShift => {
            let v = 6.0 * (w * sum_sq(&inputs.delta)).sqrt();
            BoundValue { rhs: v, terms: vec![("variance".into(), v)] }
        }
        BoundId::MinShiftUniform => {
            let v = 6.0 * max_of(&inputs.delta) * (w * inputs.horizon() as f64).sqrt();
            BoundValue { rhs: v, terms: vec![("uniform".into(), v)] }
        }
        BoundId::Bandit => bandit_terms(w, inputs.arms, &inputs.extended),
        BoundId::BanditUniform => {
            let flat = vec![max_of(&inputs.extended); inputs.horizon()];
            bandit_terms(w, inputs.arms, &flat)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub bound_id: BoundId,
    pub comparator: String,
    pub rhs: f64,
    pub regret: f64,
    /// `rhs - regret`, kept even when negative.
    pub slack: f64,
    pub terms: Vec<(String, f64)>,
    pub w: f64,
    pub arms: usize,
    pub horizon: usize,
    pub max_delta: f64,
    pub sum_sq_delta: f64,
    pub max_extended: f64,
    pub sum_sq_extended: f64,
}

impl BoundReport {
    pub fn new(id: BoundId, comparator: impl Into<String>, regret: f64, inputs: &BoundInputs) -> Self {
        let value = bound_rhs(id, inputs);
        BoundReport {
            bound_id: id,
            comparator: comparator.into(),
            rhs: value.rhs,
            regret,
            slack: value.rhs - regret,
            terms: value.terms,
            w: inputs.w,
            arms: inputs.arms,
            horizon: inputs.horizon(),
            max_delta: max_of(&inputs.delta),
            sum_sq_delta: sum_sq(&inputs.delta),
            max_extended: max_of(&inputs.extended),
            sum_sq_extended: sum_sq(&inputs.extended),
        }
    }

    pub fn holds(&self) -> bool {
        self.slack >= 0.0
    }
}
