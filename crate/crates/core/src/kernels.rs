//! Comparator classes.
//!
//! A comparator class is described by an equivalence-class state space
//! `Omega_t`, a prior over `Omega_1`, transition weights between consecutive
//! rounds and a resolver from a class to the arm it plays. Four families
//! ship with the crate: fixed arms, switching arms, context-to-arm mappings
//! and periodic arm patterns. Other families can be added by implementing
//! [`ComparatorKernel`].
//!
//! Rounds are 1-based. Arms and contexts are 0-based inside the library.
//! Every transition weight carrying a time factor (`1/t`) is evaluated at
//! the round the successor belongs to, so the first transition (into round
//! 2) keeps half of the mass in place.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{exp_nonpos, logaddexp, max_of};

/// Upper bound on the number of enumerated mappings for the contextual and
/// periodic families.
pub const MAX_ENUMERATED_CLASSES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Fixed,
    Switching,
    Contextual,
    Periodic,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Fixed => "fixed",
            KernelFamily::Switching => "switching",
            KernelFamily::Contextual => "contextual",
            KernelFamily::Periodic => "periodic",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(KernelFamily::Fixed),
            "switching" => Ok(KernelFamily::Switching),
            "contextual" => Ok(KernelFamily::Contextual),
            "periodic" => Ok(KernelFamily::Periodic),
            other => Err(Error::Config(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// One equivalence class. Arms inside the payload are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ClassState {
    Fixed { arm: usize },
    /// `age` counts the rounds spent on `arm` since the last switch,
    /// starting at 1.
    Switching { arm: usize, age: usize },
    /// `mapping[c]` is the arm played under context `c`.
    Contextual { mapping: Vec<usize> },
    /// Period `pattern.len()`; `pattern[k]` is played at phase `k`.
    Periodic { pattern: Vec<usize> },
}

impl ClassState {
    pub fn family(&self) -> KernelFamily {
        match self {
            ClassState::Fixed { .. } => KernelFamily::Fixed,
            ClassState::Switching { .. } => KernelFamily::Switching,
            ClassState::Contextual { .. } => KernelFamily::Contextual,
            ClassState::Periodic { .. } => KernelFamily::Periodic,
        }
    }
}

/// Number of maximal runs of equal consecutive values.
///
/// ```
/// assert_eq!(compete::kernels::region_count(&[0, 1, 1, 0]), 3);
/// ```
pub fn region_count(mapping: &[usize]) -> usize {
    if mapping.is_empty() {
        return 0;
    }
    1 + mapping.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Contract every comparator class implements.
///
/// `propagate` has a generic default ([`propagate_by_rows`]) that walks
/// `transitions` row by row; families with structure override it.
pub trait ComparatorKernel: Send + Sync {
    fn family_name(&self) -> String;

    fn arms(&self) -> usize;

    /// Size of the context alphabet when the class reads side information.
    fn contexts(&self) -> Option<usize> {
        None
    }

    /// `|Omega_t|` for `t >= 1`; `|Omega_0| = 1` by convention.
    fn class_count(&self, round: usize) -> usize;

    fn state_at(&self, index: usize, round: usize) -> ClassState;

    fn index_of(&self, state: &ClassState, round: usize) -> Option<usize>;

    /// Prior over `Omega_1`, in index order.
    fn initial_prior(&self) -> Vec<(ClassState, f64)>;

    fn prior_weight(&self, state: &ClassState) -> f64 {
        self.initial_prior()
            .into_iter()
            .find(|(s, _)| s == state)
            .map_or(0.0, |(_, w)| w)
    }

    /// Successors of `state` (a class of round `next_round - 1`) with
    /// positive weight.
    fn transitions(&self, state: &ClassState, next_round: usize) -> Vec<(ClassState, f64)>;

    fn transition_weight(&self, from: &ClassState, to: &ClassState, next_round: usize) -> f64 {
        self.transitions(from, next_round)
            .into_iter()
            .find(|(s, _)| s == to)
            .map_or(0.0, |(_, w)| w)
    }

    fn arm_of(&self, state: &ClassState, round: usize, context: Option<usize>) -> Result<usize>;

    fn arm_of_index(&self, index: usize, round: usize, context: Option<usize>) -> Result<usize> {
        self.arm_of(&self.state_at(index, round), round, context)
    }

    /// Arm of every class of `Omega_round`, in index order.
    fn arms_at(&self, round: usize, context: Option<usize>) -> Result<Vec<usize>> {
        (0..self.class_count(round))
            .map(|i| self.arm_of_index(i, round, context))
            .collect()
    }

    /// Maps powered log-weights over `Omega_round` to log-weights over
    /// `Omega_{round+1}`: `ln sum_prev T(next|prev) exp(powered[prev])`.
    fn propagate(&self, powered: &[f64], round: usize) -> Vec<f64> {
        propagate_by_rows(self, powered, round)
    }
}

/// Reference propagation: enumerates each row of the transition kernel.
pub fn propagate_by_rows<K: ComparatorKernel + ?Sized>(
    kernel: &K,
    powered: &[f64],
    round: usize,
) -> Vec<f64> {
    let next = round + 1;
    let mut out = vec![f64::NEG_INFINITY; kernel.class_count(next)];
    for (index, &lz) in powered.iter().enumerate() {
        if lz == f64::NEG_INFINITY {
            continue;
        }
        let state = kernel.state_at(index, round);
        for (succ, w) in kernel.transitions(&state, next) {
            let j = kernel
                .index_of(&succ, next)
                .expect("kernel emitted a successor outside Omega_{t+1}");
            out[j] = logaddexp(out[j], lz + w.ln());
        }
    }
    out
}

/// Arms and class states of one comparator over rounds `1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparatorPath {
    pub states: Vec<ClassState>,
    pub arms: Vec<usize>,
}

impl ComparatorPath {
    /// Resolves the arm of each state. `contexts[t-1]` is the side
    /// information of round `t` (ignored by context-free kernels).
    pub fn resolve<K: ComparatorKernel + ?Sized>(
        kernel: &K,
        states: Vec<ClassState>,
        contexts: &[Option<usize>],
    ) -> Result<Self> {
        let arms = states
            .iter()
            .enumerate()
            .map(|(i, s)| kernel.arm_of(s, i + 1, contexts.get(i).copied().flatten()))
            .collect::<Result<Vec<_>>>()?;
        Ok(ComparatorPath { states, arms })
    }

    pub fn horizon(&self) -> usize {
        self.states.len()
    }
}

/// `W(path) = ln max_{1<=t<=T} |Omega_{t-1}| - ln T(path)`, where the first
/// factor of `T(path)` is the prior weight of the first class. A path with
/// a zero-weight step has infinite complexity.
pub fn complexity<K: ComparatorKernel + ?Sized>(kernel: &K, path: &ComparatorPath) -> f64 {
    let horizon = path.horizon();
    if horizon == 0 {
        return 0.0;
    }
    let max_count = (1..horizon)
        .map(|t| kernel.class_count(t))
        .max()
        .unwrap_or(1)
        .max(1);
    let mut log_prior = kernel.prior_weight(&path.states[0]).ln();
    for t in 2..=horizon {
        let w = kernel.transition_weight(&path.states[t - 2], &path.states[t - 1], t);
        log_prior += w.ln();
    }
    if log_prior == f64::NEG_INFINITY || log_prior.is_nan() {
        return f64::INFINITY;
    }
    (max_count as f64).ln() - log_prior
}

/// The shipped comparator classes.
#[derive(Debug, Clone)]
pub struct KernelHandle {
    family: KernelFamily,
    arms: usize,
    contexts: usize,
    max_period: usize,
    renormalize_rows: bool,
    /// Contextual: `-c(mapping) ln(2NM)` per mapping index.
    log_share: Vec<f64>,
    /// Contextual: total `sum_B (2NM)^{-c(B)}`.
    share_total: f64,
    /// Periodic: first index of each period block, length `max_period + 1`.
    period_offsets: Vec<usize>,
}

fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

fn digits_of(mut index: usize, base: usize, len: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(index % base);
        index /= base;
    }
    out
}

fn index_of_digits(digits: &[usize], base: usize) -> usize {
    digits.iter().rev().fold(0, |acc, &d| acc * base + d)
}

impl KernelHandle {
    pub fn fixed(arms: usize) -> Result<Self> {
        Self::build(KernelFamily::Fixed, arms, 0, 0)
    }

    pub fn switching(arms: usize) -> Result<Self> {
        Self::build(KernelFamily::Switching, arms, 0, 0)
    }

    pub fn contextual(arms: usize, contexts: usize) -> Result<Self> {
        Self::build(KernelFamily::Contextual, arms, contexts, 0)
    }

    pub fn periodic(arms: usize, max_period: usize) -> Result<Self> {
        Self::build(KernelFamily::Periodic, arms, 0, max_period)
    }

    /// Scales every transition row to sum to one (affects only the
    /// sub-stochastic contextual and periodic families).
    pub fn with_row_renormalization(mut self, on: bool) -> Self {
        self.renormalize_rows = on;
        self
    }

    /// Builds a kernel from a family and the parameters it needs; unused
    /// parameters are ignored.
    pub fn build(family: KernelFamily, arms: usize, contexts: usize, max_period: usize) -> Result<Self> {
        if arms == 0 {
            return Err(Error::Config("kernel needs at least one arm".into()));
        }
        let mut kernel = KernelHandle {
            family,
            arms,
            contexts: 0,
            max_period: 0,
            renormalize_rows: false,
            log_share: Vec::new(),
            share_total: 0.0,
            period_offsets: Vec::new(),
        };
        match family {
            KernelFamily::Fixed | KernelFamily::Switching => {}
            KernelFamily::Contextual => {
                if contexts == 0 {
                    return Err(Error::Config("contextual kernel needs at least one context".into()));
                }
                let count = checked_pow(arms, contexts)
                    .filter(|&c| c <= MAX_ENUMERATED_CLASSES)
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "contextual kernel has {arms}^{contexts} mappings, cap is {MAX_ENUMERATED_CLASSES}"
                        ))
                    })?;
                kernel.contexts = contexts;
                let unit = (2.0 * contexts as f64 * arms as f64).ln();
                kernel.log_share = (0..count)
                    .map(|i| -(region_count(&digits_of(i, arms, contexts)) as f64) * unit)
                    .collect();
                kernel.share_total = kernel.log_share.iter().map(|l| l.exp()).sum();
            }
            KernelFamily::Periodic => {
                if max_period == 0 {
                    return Err(Error::Config("periodic kernel needs a maximum period of at least 1".into()));
                }
                let mut offsets = vec![0usize];
                for tau in 1..=max_period {
                    let block = checked_pow(arms, tau);
                    let next = block.and_then(|b| b.checked_add(*offsets.last().unwrap()));
                    match next {
                        Some(n) if n <= MAX_ENUMERATED_CLASSES => offsets.push(n),
                        _ => {
                            return Err(Error::Config(format!(
                                "periodic kernel with {arms} arms and period {max_period} exceeds {MAX_ENUMERATED_CLASSES} classes"
                            )))
                        }
                    }
                }
                kernel.max_period = max_period;
                kernel.period_offsets = offsets;
            }
        }
        Ok(kernel)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn max_period(&self) -> usize {
        self.max_period
    }

    /// Context alphabet size `N` (0 for context-free families).
    pub fn contexts_len(&self) -> usize {
        self.contexts
    }

    pub fn renormalize_rows(&self) -> bool {
        self.renormalize_rows
    }

    fn two_m(&self) -> f64 {
        2.0 * self.arms as f64
    }

    fn period_of_index(&self, index: usize) -> usize {
        // offsets[tau - 1] <= index < offsets[tau]
        self.period_offsets.partition_point(|&o| o <= index)
    }

    /// `sum of off-diagonal weights * next_round` for a row, before any
    /// renormalisation. Contextual and periodic rows sum to
    /// `1 - 1/s + off_mass/s`.
    fn off_mass(&self, state: &ClassState) -> f64 {
        match state {
            ClassState::Contextual { mapping } => {
                let own = (-(region_count(mapping) as f64) * (2.0 * self.contexts as f64 * self.arms as f64).ln()).exp();
                self.share_total - own
            }
            ClassState::Periodic { pattern } => {
                let tau = pattern.len() as i32;
                let m = self.arms as f64;
                let mut ext = 0.0;
                let mut tail = 0.0;
                let mut all = 0.0;
                for tp in 1..=self.max_period as i32 {
                    all += 0.5f64.powi(tp);
                    if tp > tau {
                        ext += 0.5f64.powi(tp - tau);
                        tail += 0.5f64.powi(tp);
                    }
                }
                0.5 * (ext + all - self.two_m().powi(-tau) - tail * m.powi(-tau))
            }
            _ => 1.0,
        }
    }

    fn row_sum(&self, state: &ClassState, next_round: usize) -> f64 {
        match self.family {
            KernelFamily::Fixed | KernelFamily::Switching => 1.0,
            KernelFamily::Contextual | KernelFamily::Periodic => {
                let s = next_round as f64;
                1.0 - 1.0 / s + self.off_mass(state) / s
            }
        }
    }

    fn row_scale(&self, state: &ClassState, next_round: usize) -> f64 {
        if self.renormalize_rows {
            self.row_sum(state, next_round)
        } else {
            1.0
        }
    }

    fn raw_weight(&self, from: &ClassState, to: &ClassState, next_round: usize) -> f64 {
        let s = next_round as f64;
        match (from, to) {
            (ClassState::Fixed { arm: a }, ClassState::Fixed { arm: b }) => {
                if a == b {
                    1.0
                } else {
                    0.0
                }
            }
            (ClassState::Switching { arm: a, age }, ClassState::Switching { arm: b, age: nb }) => {
                let denom = (*age + 1) as f64;
                if a == b && *nb == age + 1 {
                    if self.arms == 1 {
                        1.0
                    } else {
                        1.0 - 1.0 / denom
                    }
                } else if a != b && *nb == 1 {
                    1.0 / ((self.arms - 1) as f64 * denom)
                } else {
                    0.0
                }
            }
            (ClassState::Contextual { mapping: a }, ClassState::Contextual { mapping: b }) => {
                if a == b {
                    1.0 - 1.0 / s
                } else {
                    let c = region_count(b) as i32;
                    (1.0 / s) * (2.0 * self.contexts as f64 * self.arms as f64).powi(-c)
                }
            }
            (ClassState::Periodic { pattern: a }, ClassState::Periodic { pattern: b }) => {
                let (ta, tb) = (a.len() as i32, b.len() as i32);
                if a == b {
                    1.0 - 1.0 / s
                } else if tb > ta && b[..a.len()] == a[..] {
                    (1.0 / (2.0 * s)) * self.two_m().powi(ta - tb)
                } else {
                    (1.0 / (2.0 * s)) * self.two_m().powi(-tb)
                }
            }
            _ => 0.0,
        }
    }

    fn is_valid(&self, state: &ClassState, round: usize) -> bool {
        let arm_ok = |a: &usize| *a < self.arms;
        match (self.family, state) {
            (KernelFamily::Fixed, ClassState::Fixed { arm }) => arm_ok(arm),
            (KernelFamily::Switching, ClassState::Switching { arm, age }) => {
                arm_ok(arm) && *age >= 1 && *age <= round.max(1)
            }
            (KernelFamily::Contextual, ClassState::Contextual { mapping }) => {
                mapping.len() == self.contexts && mapping.iter().all(arm_ok)
            }
            (KernelFamily::Periodic, ClassState::Periodic { pattern }) => {
                !pattern.is_empty() && pattern.len() <= self.max_period && pattern.iter().all(arm_ok)
            }
            _ => false,
        }
    }

    fn propagate_switching(&self, powered: &[f64], round: usize) -> Vec<f64> {
        let m = self.arms;
        let t = round;
        let next = t + 1;
        let mut out = vec![f64::NEG_INFINITY; m * next];
        let shift = max_of(powered);
        // Per-arm switch-out mass: sum_age y / (age + 1).
        let mut leave = vec![0.0; m];
        let stay: Vec<f64> = (1..=t)
            .map(|age| if m == 1 { 0.0 } else { (age as f64 / (age + 1) as f64).ln() })
            .collect();
        for arm in 0..m {
            for age in 1..=t {
                let lz = powered[arm * t + age - 1];
                leave[arm] += exp_nonpos(lz - shift) / (age + 1) as f64;
                out[arm * next + age] = lz + stay[age - 1];
            }
        }
        if m > 1 {
            let mut prefix = vec![0.0; m + 1];
            for arm in 0..m {
                prefix[arm + 1] = prefix[arm] + leave[arm];
            }
            let mut suffix = vec![0.0; m + 1];
            for arm in (0..m).rev() {
                suffix[arm] = suffix[arm + 1] + leave[arm];
            }
            let spread = (m - 1) as f64;
            for arm in 0..m {
                let incoming = (prefix[arm] + suffix[arm + 1]) / spread;
                out[arm * next] = shift + incoming.ln();
            }
        }
        out
    }

    fn propagate_contextual(&self, powered: &[f64], round: usize) -> Vec<f64> {
        let s = (round + 1) as f64;
        let shift = max_of(powered);
        let scales: Vec<f64> = (0..powered.len())
            .map(|i| self.row_scale(&self.state_at(i, round), round + 1))
            .collect();
        let y: Vec<f64> = powered
            .iter()
            .zip(&scales)
            .map(|(&lz, sc)| (lz - shift).exp() / sc)
            .collect();
        let total: f64 = y.iter().sum();
        let log_keep = (1.0 - 1.0 / s).ln();
        powered
            .iter()
            .enumerate()
            .map(|(b, &lz)| {
                let stay = lz - shift - scales[b].ln() + log_keep;
                let moved = (total - y[b]).max(0.0) * self.log_share[b].exp() / s;
                shift + logaddexp(stay, moved.ln())
            })
            .collect()
    }

    fn propagate_periodic(&self, powered: &[f64], round: usize) -> Vec<f64> {
        let s = (round + 1) as f64;
        let m = self.arms;
        let two_m = self.two_m();
        let shift = max_of(powered);
        let scales: Vec<f64> = (0..powered.len())
            .map(|i| self.row_scale(&self.state_at(i, round), round + 1))
            .collect();
        let y: Vec<f64> = powered
            .iter()
            .zip(&scales)
            .map(|(&lz, sc)| (lz - shift).exp() / sc)
            .collect();
        let total: f64 = y.iter().sum();
        let log_keep = (1.0 - 1.0 / s).ln();
        let mut out = Vec::with_capacity(powered.len());
        for tau in 1..=self.max_period {
            let base = self.period_offsets[tau - 1];
            let block = self.period_offsets[tau] - base;
            for local in 0..block {
                let b = base + local;
                let mut extended = 0.0;
                let mut prefixes = 0.0;
                let mut modulus = 1usize;
                for k in 1..tau {
                    modulus *= m;
                    let a = self.period_offsets[k - 1] + local % modulus;
                    extended += two_m.powi(k as i32 - tau as i32) * y[a];
                    prefixes += y[a];
                }
                let unrelated = (total - y[b] - prefixes).max(0.0);
                let moved = (extended + two_m.powi(-(tau as i32)) * unrelated) / (2.0 * s);
                let stay = powered[b] - shift - scales[b].ln() + log_keep;
                out.push(shift + logaddexp(stay, moved.ln()));
            }
        }
        out
    }
}

impl ComparatorKernel for KernelHandle {
    fn family_name(&self) -> String {
        self.family.name().to_string()
    }

    fn arms(&self) -> usize {
        self.arms
    }

    fn contexts(&self) -> Option<usize> {
        (self.family == KernelFamily::Contextual).then_some(self.contexts)
    }

    fn class_count(&self, round: usize) -> usize {
        if round == 0 {
            return 1;
        }
        match self.family {
            KernelFamily::Fixed => self.arms,
            KernelFamily::Switching => self.arms * round,
            KernelFamily::Contextual => self.log_share.len(),
            KernelFamily::Periodic => *self.period_offsets.last().unwrap(),
        }
    }

    fn state_at(&self, index: usize, round: usize) -> ClassState {
        match self.family {
            KernelFamily::Fixed => ClassState::Fixed { arm: index },
            KernelFamily::Switching => ClassState::Switching {
                arm: index / round,
                age: index % round + 1,
            },
            KernelFamily::Contextual => ClassState::Contextual {
                mapping: digits_of(index, self.arms, self.contexts),
            },
            KernelFamily::Periodic => {
                let tau = self.period_of_index(index);
                ClassState::Periodic {
                    pattern: digits_of(index - self.period_offsets[tau - 1], self.arms, tau),
                }
            }
        }
    }

    fn index_of(&self, state: &ClassState, round: usize) -> Option<usize> {
        if !self.is_valid(state, round) {
            return None;
        }
        Some(match state {
            ClassState::Fixed { arm } => *arm,
            ClassState::Switching { arm, age } => arm * round + age - 1,
            ClassState::Contextual { mapping } => index_of_digits(mapping, self.arms),
            ClassState::Periodic { pattern } => {
                self.period_offsets[pattern.len() - 1] + index_of_digits(pattern, self.arms)
            }
        })
    }

    fn initial_prior(&self) -> Vec<(ClassState, f64)> {
        (0..self.class_count(1))
            .map(|i| {
                let s = self.state_at(i, 1);
                let w = self.prior_weight(&s);
                (s, w)
            })
            .collect()
    }

    fn prior_weight(&self, state: &ClassState) -> f64 {
        if !self.is_valid(state, 1) {
            return 0.0;
        }
        match state {
            ClassState::Fixed { .. } => 1.0 / self.arms as f64,
            ClassState::Switching { age, .. } => {
                if *age == 1 {
                    1.0 / self.arms as f64
                } else {
                    0.0
                }
            }
            ClassState::Contextual { mapping } => {
                self.log_share[index_of_digits(mapping, self.arms)].exp() / self.share_total
            }
            ClassState::Periodic { pattern } => 0.5 * self.two_m().powi(-(pattern.len() as i32)),
        }
    }

    fn transitions(&self, state: &ClassState, next_round: usize) -> Vec<(ClassState, f64)> {
        let scale = self.row_scale(state, next_round);
        let candidates: Vec<ClassState> = match state {
            ClassState::Fixed { .. } => vec![state.clone()],
            ClassState::Switching { arm, age } => (0..self.arms)
                .map(|b| {
                    if b == *arm {
                        ClassState::Switching { arm: b, age: age + 1 }
                    } else {
                        ClassState::Switching { arm: b, age: 1 }
                    }
                })
                .collect(),
            _ => (0..self.class_count(next_round))
                .map(|i| self.state_at(i, next_round))
                .collect(),
        };
        candidates
            .into_iter()
            .filter_map(|succ| {
                let w = self.raw_weight(state, &succ, next_round) / scale;
                (w > 0.0).then_some((succ, w))
            })
            .collect()
    }

    fn transition_weight(&self, from: &ClassState, to: &ClassState, next_round: usize) -> f64 {
        if !self.is_valid(from, next_round.saturating_sub(1)) || !self.is_valid(to, next_round) {
            return 0.0;
        }
        self.raw_weight(from, to, next_round) / self.row_scale(from, next_round)
    }

    fn arm_of(&self, state: &ClassState, round: usize, context: Option<usize>) -> Result<usize> {
        match state {
            ClassState::Fixed { arm } | ClassState::Switching { arm, .. } => Ok(*arm),
            ClassState::Contextual { mapping } => match context {
                Some(c) if c < mapping.len() => Ok(mapping[c]),
                _ => Err(Error::Context {
                    round,
                    contexts: mapping.len(),
                    got: context.map(|c| c + 1),
                }),
            },
            ClassState::Periodic { pattern } => Ok(pattern[(round - 1) % pattern.len()]),
        }
    }

    fn arm_of_index(&self, index: usize, round: usize, context: Option<usize>) -> Result<usize> {
        match self.family {
            KernelFamily::Fixed => Ok(index),
            KernelFamily::Switching => Ok(index / round),
            KernelFamily::Contextual => match context {
                Some(c) if c < self.contexts => Ok(index / self.arms.pow(c as u32) % self.arms),
                _ => Err(Error::Context {
                    round,
                    contexts: self.contexts,
                    got: context.map(|c| c + 1),
                }),
            },
            KernelFamily::Periodic => {
                let tau = self.period_of_index(index);
                let phase = (round - 1) % tau;
                Ok((index - self.period_offsets[tau - 1]) / self.arms.pow(phase as u32) % self.arms)
            }
        }
    }

    fn arms_at(&self, round: usize, context: Option<usize>) -> Result<Vec<usize>> {
        match self.family {
            KernelFamily::Fixed => Ok((0..self.arms).collect()),
            // Classes of one arm occupy a contiguous block of `round` ages.
            KernelFamily::Switching => Ok((0..self.arms).flat_map(|a| std::iter::repeat_n(a, round)).collect()),
            _ => (0..self.class_count(round))
                .map(|i| self.arm_of_index(i, round, context))
                .collect(),
        }
    }

    fn propagate(&self, powered: &[f64], round: usize) -> Vec<f64> {
        match self.family {
            KernelFamily::Fixed => powered.to_vec(),
            KernelFamily::Switching => self.propagate_switching(powered, round),
            KernelFamily::Contextual => self.propagate_contextual(powered, round),
            KernelFamily::Periodic => self.propagate_periodic(powered, round),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-14;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= TOL * (1.0 + b.abs())
    }

    #[test]
    fn fixed_prior_is_uniform() {
        let k = KernelHandle::fixed(3).unwrap();
        let prior = k.initial_prior();
        assert_eq!(prior.len(), 3);
        assert!(prior.iter().all(|(_, w)| close(*w, 1.0 / 3.0)));
        let single = KernelHandle::fixed(1).unwrap().initial_prior();
        assert_eq!(single, vec![(ClassState::Fixed { arm: 0 }, 1.0)]);
    }

    #[test]
    fn switching_prior_starts_at_age_one() {
        let k = KernelHandle::switching(3).unwrap();
        let prior = k.initial_prior();
        assert_eq!(prior.len(), 3);
        for (m, (s, w)) in prior.iter().enumerate() {
            assert_eq!(*s, ClassState::Switching { arm: m, age: 1 });
            assert!(close(*w, 1.0 / 3.0));
        }
    }

    #[test]
    fn periodic_prior_total() {
        let k = KernelHandle::periodic(2, 2).unwrap();
        let prior = k.initial_prior();
        assert_eq!(prior.len(), 6);
        let by_period = |tau: usize| prior.iter().filter(|(s, _)| matches!(s, ClassState::Periodic { pattern } if pattern.len() == tau)).count();
        assert_eq!((by_period(1), by_period(2)), (2, 4));
        let total: f64 = prior.iter().map(|(_, w)| w).sum();
        assert!(close(total, 0.375));
    }

    #[test]
    fn contextual_prior_normalised() {
        let k = KernelHandle::contextual(2, 3).unwrap();
        let total: f64 = k.initial_prior().iter().map(|(_, w)| w).sum();
        assert!(close(total, 1.0));
    }

    #[test]
    fn switching_row_example() {
        let k = KernelHandle::switching(3).unwrap();
        let row = k.transitions(&ClassState::Switching { arm: 1, age: 3 }, 4);
        let get = |arm, age| {
            row.iter()
                .find(|(s, _)| *s == ClassState::Switching { arm, age })
                .map(|(_, w)| *w)
                .unwrap()
        };
        assert!(close(get(1, 4), 0.75));
        assert!(close(get(0, 1), 0.125));
        assert!(close(get(2, 1), 0.125));
        assert_eq!(row.len(), 3);
        assert!(close(row.iter().map(|(_, w)| w).sum(), 1.0));
    }

    #[test]
    fn fixed_row_is_identity() {
        let k = KernelHandle::fixed(4).unwrap();
        let s = ClassState::Fixed { arm: 2 };
        assert_eq!(k.transitions(&s, 7), vec![(s.clone(), 1.0)]);
    }

    #[test]
    fn contextual_row_example() {
        let k = KernelHandle::contextual(2, 2).unwrap();
        let a = ClassState::Contextual { mapping: vec![0, 0] };
        let b = ClassState::Contextual { mapping: vec![1, 1] };
        assert!(close(k.transition_weight(&a, &a, 4), 0.75));
        assert!(close(k.transition_weight(&a, &b, 4), 0.25 / 8.0));
        let c = ClassState::Contextual { mapping: vec![0, 1] };
        assert!(close(k.transition_weight(&a, &c, 4), 0.25 / 64.0));
    }

    #[test]
    fn row_sums_by_family() {
        let fams = [
            KernelHandle::switching(3).unwrap(),
            KernelHandle::contextual(2, 3).unwrap(),
            KernelHandle::periodic(3, 3).unwrap(),
        ];
        for k in &fams {
            for t in 1..5 {
                for i in 0..k.class_count(t) {
                    let s = k.state_at(i, t);
                    let sum: f64 = k.transitions(&s, t + 1).iter().map(|(_, w)| w).sum();
                    if k.family() == KernelFamily::Switching {
                        assert!(close(sum, 1.0), "{s:?} {sum}");
                    } else {
                        assert!(sum <= 1.0 + TOL, "{s:?} {sum}");
                        assert!(close(sum, k.row_sum(&s, t + 1)), "{s:?}: {sum} vs {}", k.row_sum(&s, t + 1));
                    }
                }
            }
        }
    }

    #[test]
    fn renormalised_rows_sum_to_one() {
        let k = KernelHandle::periodic(2, 3).unwrap().with_row_renormalization(true);
        for i in 0..k.class_count(1) {
            let s = k.state_at(i, 1);
            let sum: f64 = k.transitions(&s, 3).iter().map(|(_, w)| w).sum();
            assert!(close(sum, 1.0));
        }
    }

    #[test]
    fn arm_resolution() {
        let f = KernelHandle::fixed(3).unwrap();
        assert_eq!(f.arm_of(&ClassState::Fixed { arm: 1 }, 9, None).unwrap(), 1);
        let c = KernelHandle::contextual(2, 2).unwrap();
        let map = ClassState::Contextual { mapping: vec![1, 0] };
        assert_eq!(c.arm_of(&map, 1, Some(1)).unwrap(), 0);
        assert!(matches!(c.arm_of(&map, 1, None), Err(Error::Context { .. })));
        assert!(c.arm_of_index(0, 1, Some(2)).is_err());
        let p = KernelHandle::periodic(2, 3).unwrap();
        let g = ClassState::Periodic { pattern: vec![0, 1, 0] };
        assert_eq!(p.arm_of(&g, 5, None).unwrap(), 1);
        let g2 = ClassState::Periodic { pattern: vec![0, 1] };
        assert_eq!(p.arm_of(&g2, 3, None).unwrap(), 0);
    }

    #[test]
    fn index_roundtrip_and_indexed_arms() {
        let ks = [
            KernelHandle::fixed(3).unwrap(),
            KernelHandle::switching(3).unwrap(),
            KernelHandle::contextual(3, 2).unwrap(),
            KernelHandle::periodic(2, 3).unwrap(),
        ];
        for k in &ks {
            for t in [1usize, 2, 5] {
                for i in 0..k.class_count(t) {
                    let s = k.state_at(i, t);
                    assert_eq!(k.index_of(&s, t), Some(i));
                    for c in 0..k.contexts().unwrap_or(1) {
                        let ctx = k.contexts().map(|_| c);
                        assert_eq!(k.arm_of_index(i, t, ctx).unwrap(), k.arm_of(&s, t, ctx).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn region_counts() {
        assert_eq!(region_count(&[0, 0, 0]), 1);
        assert_eq!(region_count(&[0, 1, 1, 0]), 3);
        assert_eq!(region_count(&[0, 1, 0, 1]), 4);
    }

    #[test]
    fn construction_errors() {
        assert!(KernelHandle::fixed(0).is_err());
        assert!(KernelHandle::contextual(2, 0).is_err());
        assert!(KernelHandle::periodic(2, 0).is_err());
        assert!(KernelHandle::contextual(2, 13).is_err());
        assert!(KernelHandle::contextual(2, 12).is_ok());
        assert!(KernelHandle::periodic(4, 6).is_err());
    }

    #[test]
    fn fast_propagation_matches_rows() {
        let ks = [
            KernelHandle::fixed(3).unwrap(),
            KernelHandle::switching(3).unwrap(),
            KernelHandle::switching(1).unwrap(),
            KernelHandle::contextual(2, 2).unwrap(),
            KernelHandle::contextual(3, 2).unwrap().with_row_renormalization(true),
            KernelHandle::periodic(2, 3).unwrap(),
            KernelHandle::periodic(3, 2).unwrap().with_row_renormalization(true),
        ];
        for k in &ks {
            for t in 1..5 {
                let n = k.class_count(t);
                let powered: Vec<f64> = (0..n).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.7).collect();
                let fast = k.propagate(&powered, t);
                let slow = propagate_by_rows(k, &powered, t);
                assert_eq!(fast.len(), slow.len());
                for (a, b) in fast.iter().zip(&slow) {
                    if b.is_finite() {
                        assert!((a - b).abs() < 1e-12, "{:?} t={t}: {a} vs {b}", k.family());
                    } else {
                        assert_eq!(a, b);
                    }
                }
            }
        }
    }

    #[test]
    fn complexity_fixed_constant_path() {
        let k = KernelHandle::fixed(4).unwrap();
        let path = ComparatorPath::resolve(&k, vec![ClassState::Fixed { arm: 2 }; 10], &[]).unwrap();
        assert!(close(complexity(&k, &path), 2.0 * 4f64.ln()));
        let one = ComparatorPath::resolve(&k, vec![ClassState::Fixed { arm: 2 }], &[]).unwrap();
        assert!(close(complexity(&k, &one), 4f64.ln()));
    }

    #[test]
    fn complexity_switching_no_switch() {
        // M=2, T=8, arm 0 throughout: prior 1/2, stays 1/2 * 2/3 * ... * 7/8 = 1/8,
        // max |Omega_{t-1}| = |Omega_7| = 14.
        let k = KernelHandle::switching(2).unwrap();
        let states = (1..=8).map(|a| ClassState::Switching { arm: 0, age: a }).collect();
        let path = ComparatorPath::resolve(&k, states, &[]).unwrap();
        let expected = 14f64.ln() - (0.5f64 * (1.0 / 8.0)).ln();
        assert!(close(complexity(&k, &path), expected));
    }

    #[test]
    fn complexity_infinite_on_zero_step() {
        let k = KernelHandle::fixed(2).unwrap();
        let path = ComparatorPath::resolve(&k, vec![ClassState::Fixed { arm: 0 }, ClassState::Fixed { arm: 1 }], &[]).unwrap();
        assert_eq!(complexity(&k, &path), f64::INFINITY);
    }
}
