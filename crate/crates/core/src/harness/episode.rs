//! One learner run against one loss model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::comparators::Comparator;
use super::ledger::{AuditViolation, RegretLedger, RoundRecord};
use crate::engine::{exponent_excess, sample_arm, Learner};
use crate::environments::LossModel;
use crate::error::{AuditCheck, Error, Result};
use crate::kernels::ComparatorKernel;
use crate::schedules::{phi_bandit, phi_full_centered, phi_full_minshift, Mode, ScheduleState};

/// Relative slack granted to the audits for floating-point rounding.
pub const AUDIT_TOLERANCE: f64 = 1e-12;

/// What to do when an assumption audit fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuditPolicy {
    /// Keep running and record the violation in the ledger.
    #[default]
    Record,
    /// Stop with [`Error::Assumption`].
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeConfig {
    pub mode: Mode,
    pub w_budget: f64,
    pub seed: u64,
    pub audit: AuditPolicy,
}

impl EpisodeConfig {
    pub fn new(mode: Mode, w_budget: f64, seed: u64) -> Self {
        EpisodeConfig { mode, w_budget, seed, audit: AuditPolicy::Record }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn strict(mut self) -> Self {
        self.audit = AuditPolicy::Abort;
        self
    }
}

/// Largest finite complexity among the comparators (`0` if none is
/// representable), the default budget when none is given.
pub fn auto_budget(comparators: &[Comparator]) -> f64 {
    comparators
        .iter()
        .map(|c| c.complexity)
        .filter(|w| w.is_finite())
        .fold(0.0, f64::max)
}

fn check_compatible<K: ComparatorKernel + ?Sized>(
    kernel: &K,
    model: &LossModel,
    comparators: &[Comparator],
) -> Result<()> {
    if kernel.arms() != model.arms() {
        return Err(Error::Config(format!(
            "kernel has {} arms but the environment has {}",
            kernel.arms(),
            model.arms()
        )));
    }
    if let Some(n) = kernel.contexts() {
        match model.contexts() {
            Some(k) if k <= n => {}
            other => {
                return Err(Error::Config(format!(
                    "{} kernel over {n} contexts cannot read environment contexts {other:?}",
                    kernel.family_name()
                )))
            }
        }
    }
    if let Some(c) = comparators.iter().find(|c| c.arms().len() != model.horizon()) {
        return Err(Error::Config(format!("comparator `{}` does not cover the horizon", c.id)));
    }
    Ok(())
}

struct Auditor<'a> {
    policy: AuditPolicy,
    ledger: &'a mut RegretLedger,
}

impl Auditor<'_> {
    fn check(&mut self, round: usize, check: AuditCheck, value: f64, limit: f64) -> Result<()> {
        let slack = AUDIT_TOLERANCE * limit.abs().max(1.0);
        if value <= limit + slack {
            return Ok(());
        }
        match self.policy {
            AuditPolicy::Record => {
                self.ledger.record_violation(AuditViolation { round, check, value, limit });
                Ok(())
            }
            AuditPolicy::Abort => Err(Error::Assumption {
                round,
                check,
                detail: format!("value {value} exceeds limit {limit}"),
            }),
        }
    }
}

/// Runs rounds `1..=T`: selection probabilities, draw, feedback, loss
/// estimate, statistics, new rate, exponential update with the previous
/// rate and transition with the rate ratio. The draw stream is a ChaCha8
/// generator seeded with `config.seed`.
pub fn run_episode<K: ComparatorKernel + ?Sized>(
    kernel: &K,
    model: &LossModel,
    comparators: &[Comparator],
    config: &EpisodeConfig,
) -> Result<RegretLedger> {
    check_compatible(kernel, model, comparators)?;
    let m = model.arms();
    let mut learner = Learner::new(kernel)?;
    let mut schedule = ScheduleState::new(config.mode, config.w_budget)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let ids = comparators.iter().map(|c| c.id.clone()).collect();
    let mut ledger = RegretLedger::new(config.mode, config.w_budget, config.seed, m, ids);
    let range_limit = if config.mode.is_bandit() { 1.0 } else { config.w_budget };
    let mut last_eta = f64::INFINITY;

    for t in 1..=model.horizon() {
        let round = model.losses_at(t)?;
        let context = round.context;
        let eps = schedule.exploration(t, m);
        let dist = learner.distribution(context, eps)?;
        let arm = sample_arm(&dist, &mut rng);
        let losses = &round.losses;
        let exp_loss: f64 = dist.q.iter().zip(losses).map(|(q, l)| q * l).sum();

        let phi = match config.mode {
            Mode::FullCentered => phi_full_centered(losses, &dist.p),
            Mode::FullMinShift => phi_full_minshift(losses),
            Mode::Bandit => {
                let prev = schedule.take_baseline(losses[arm]);
                phi_bandit(losses[arm], arm, &dist.q, prev)?
            }
        };
        let stats = schedule.update_stats(&phi, &dist.p);
        let step = schedule.advance_eta();

        let comparator_losses: Vec<f64> = comparators.iter().map(|c| losses[c.arms()[t - 1]]).collect();
        let record = RoundRecord { t, arm, exp_loss, eta: step.eta, eps, d: stats.d, v: stats.v };
        ledger.push_round(record, &dist.p, &dist.q, &comparator_losses);
        if let Some(count) = step.backfilled {
            ledger.backfill_eta(count, step.eta);
            last_eta = step.eta;
        }

        let mut audit = Auditor { policy: config.audit, ledger: &mut ledger };
        audit.check(t, AuditCheck::ExponentBound, exponent_excess(&phi, step.eta_prev), 1.0)?;
        audit.check(t, AuditCheck::CurrentExponentBound, exponent_excess(&phi, step.eta), 1.0)?;
        audit.check(t, AuditCheck::EtaMonotone, step.eta, last_eta)?;
        audit.check(t, AuditCheck::EtaRange, step.eta * stats.d, range_limit)?;
        let floor = eps / m as f64;
        let q_min = dist.q.iter().copied().fold(f64::INFINITY, f64::min);
        // Written as `floor <= q_min` so the shared tolerance applies.
        audit.check(t, AuditCheck::ExplorationFloor, floor - q_min, 0.0)?;
        last_eta = step.eta;

        learner.update(&phi, context, step.eta_prev, step.ratio)?;
    }
    Ok(ledger)
}
