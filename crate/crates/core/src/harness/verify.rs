//! Cross-checks shared by the test suites and the `verify` command.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::comparators::Comparator;
use super::episode::{run_episode, EpisodeConfig};
use super::ledger::RegretLedger;
use super::oracle::brute_force_oracle;
use crate::engine::Learner;
use crate::environments::{Affine, LossModel};
use crate::error::{AuditCheck, Result};
use crate::kernels::ComparatorKernel;
use crate::schedules::{Mode, ScheduleState};

/// Engine run driven by a given performance sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineReplay {
    /// `p_1..p_T`.
    pub p: Vec<Vec<f64>>,
    /// Effective `eta_0..eta_T` with `eta_0 = eta_1`.
    pub etas: Vec<f64>,
}

/// Feeds `phis` straight into the engine, with the rate schedule of `mode`
/// computed from them. The returned rates are the back-filled ones; they
/// reproduce the engine whenever the pending prefix (if any) has zero
/// performance vectors, which is the only way a prefix can stay pending.
pub fn replay_engine<K: ComparatorKernel + ?Sized>(
    kernel: &K,
    mode: Mode,
    w_budget: f64,
    phis: &[Vec<f64>],
    contexts: &[Option<usize>],
) -> Result<EngineReplay> {
    let mut learner = Learner::new(kernel)?;
    let mut schedule = ScheduleState::new(mode, w_budget)?;
    let mut p = Vec::with_capacity(phis.len());
    for (i, phi) in phis.iter().enumerate() {
        let context = contexts.get(i).copied().flatten();
        let dist = learner.distribution(context, 0.0)?;
        schedule.update_stats(phi, &dist.p);
        let step = schedule.advance_eta();
        learner.update(phi, context, step.eta_prev, step.ratio)?;
        p.push(dist.p);
    }
    let history = schedule.eta_history();
    let mut etas = Vec::with_capacity(history.len() + 1);
    etas.push(history.first().copied().unwrap_or(crate::schedules::ETA_CAP));
    etas.extend_from_slice(history);
    Ok(EngineReplay { p, etas })
}

/// Uniform `[-1, 1]` performance vectors and uniform contexts.
pub fn random_inputs<K: ComparatorKernel + ?Sized>(
    kernel: &K,
    horizon: usize,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<Option<usize>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = kernel.arms();
    let mut phis = Vec::with_capacity(horizon);
    let mut contexts = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        phis.push((0..m).map(|_| rng.random_range(-1.0..=1.0)).collect());
        contexts.push(kernel.contexts().map(|n| rng.random_range(0..n)));
    }
    (phis, contexts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleAgreement {
    pub family: String,
    pub mode: Mode,
    pub horizon: usize,
    pub max_abs_diff: f64,
}

/// Largest coordinate gap between engine and oracle on random inputs.
pub fn oracle_agreement<K: ComparatorKernel + ?Sized>(
    kernel: &K,
    mode: Mode,
    w_budget: f64,
    horizon: usize,
    seed: u64,
) -> Result<OracleAgreement> {
    let (phis, contexts) = random_inputs(kernel, horizon, seed);
    let engine = replay_engine(kernel, mode, w_budget, &phis, &contexts)?;
    let oracle = brute_force_oracle(kernel, &phis, &engine.etas, &contexts)?;
    let max_abs_diff = engine
        .p
        .iter()
        .flatten()
        .zip(oracle.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(OracleAgreement { family: kernel.family_name(), mode, horizon, max_abs_diff })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AffineComparison {
    pub scale: f64,
    pub shift: f64,
    pub same_arms: bool,
    pub max_q_diff: f64,
    pub max_p_diff: f64,
    /// Per comparator: `|R' - a R| / max(|a R|, a)`.
    pub regret_rel_err: Vec<f64>,
    /// Audit violations of both runs, per check.
    pub audit_violations: BTreeMap<AuditCheck, usize>,
}

impl AffineComparison {
    pub fn within(&self, q_tol: f64, regret_tol: f64) -> bool {
        self.same_arms
            && self.max_q_diff <= q_tol
            && self.max_p_diff <= q_tol
            && self.regret_rel_err.iter().all(|e| *e <= regret_tol)
    }
}

fn max_traj_diff(a: &RegretLedger, b: &RegretLedger, pick: fn(&RegretLedger, usize) -> &[f64]) -> f64 {
    (1..=a.horizon())
        .flat_map(|t| pick(a, t).iter().zip(pick(b, t)).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max)
}

/// Runs the same episode on `model` and on `model` with `l -> a l + b`.
pub fn affine_comparison<K: ComparatorKernel + ?Sized>(
    kernel: &K,
    model: &LossModel,
    comparators: &[Comparator],
    config: &EpisodeConfig,
    affine: Affine,
) -> Result<AffineComparison> {
    let base = run_episode(kernel, model, comparators, config)?;
    let moved_model = model.clone().with_affine(affine);
    let moved = run_episode(kernel, &moved_model, comparators, config)?;
    let a = affine.scale;
    let regret_rel_err = (0..comparators.len())
        .map(|j| {
            let expected = a * base.regret(j);
            (moved.regret(j) - expected).abs() / expected.abs().max(a)
        })
        .collect();
    Ok(AffineComparison {
        scale: a,
        shift: affine.shift,
        same_arms: base.chosen_arms() == moved.chosen_arms(),
        max_q_diff: max_traj_diff(&base, &moved, RegretLedger::q_at),
        max_p_diff: max_traj_diff(&base, &moved, RegretLedger::p_at),
        regret_rel_err,
        audit_violations: merge_counts([base.violation_counts(), moved.violation_counts()]),
    })
}

pub fn merge_counts<I>(maps: I) -> BTreeMap<AuditCheck, usize>
where
    I: IntoIterator<Item = BTreeMap<AuditCheck, usize>>,
{
    let mut out = BTreeMap::new();
    for map in maps {
        for (k, v) in map {
            *out.entry(k).or_default() += v;
        }
    }
    out
}

/// Structural checks on one ledger: every `q_t` and `p_t` on the simplex
/// and the reported rates nonincreasing. Returns the first failure.
pub fn ledger_sanity(ledger: &RegretLedger, tol: f64) -> std::result::Result<(), String> {
    for t in 1..=ledger.horizon() {
        for (name, v) in [("p", ledger.p_at(t)), ("q", ledger.q_at(t))] {
            let sum: f64 = v.iter().sum();
            if (sum - 1.0).abs() > tol || v.iter().any(|x| !(*x >= 0.0)) {
                return Err(format!("round {t}: {name} = {v:?} is off the simplex"));
            }
        }
    }
    let etas = ledger.etas();
    if let Some(w) = etas.windows(2).position(|w| w[1] > w[0]) {
        return Err(format!("rate increases at round {}", w + 2));
    }
    Ok(())
}
