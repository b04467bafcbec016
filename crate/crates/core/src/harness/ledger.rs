//! Per-round accounting of one episode.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::environments::LossModel;
use crate::error::{AuditCheck, Result};
use crate::numerics::fmt_g12;
use crate::schedules::Mode;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    /// Sampled arm, 0-based.
    pub arm: usize,
    /// `E_q[l_t]` in loss units.
    pub exp_loss: f64,
    pub eta: f64,
    pub eps: f64,
    pub d: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditViolation {
    pub round: usize,
    pub check: AuditCheck,
    pub value: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretLedger {
    pub mode: Mode,
    pub w_budget: f64,
    pub seed: u64,
    arms: usize,
    rounds: Vec<RoundRecord>,
    p: Vec<f64>,
    q: Vec<f64>,
    comparator_ids: Vec<String>,
    increments: Vec<Vec<f64>>,
    violations: Vec<AuditViolation>,
}

impl RegretLedger {
    pub fn new(mode: Mode, w_budget: f64, seed: u64, arms: usize, comparator_ids: Vec<String>) -> Self {
        let increments = vec![Vec::new(); comparator_ids.len()];
        RegretLedger {
            mode,
            w_budget,
            seed,
            arms,
            rounds: Vec::new(),
            p: Vec::new(),
            q: Vec::new(),
            comparator_ids,
            increments,
            violations: Vec::new(),
        }
    }

    /// Appends round `t`. `comparator_losses[j]` is `l_{t,s_t}` for
    /// comparator `j`.
    pub fn push_round(&mut self, record: RoundRecord, p: &[f64], q: &[f64], comparator_losses: &[f64]) {
        debug_assert_eq!(record.t, self.rounds.len() + 1);
        debug_assert_eq!(comparator_losses.len(), self.increments.len());
        self.p.extend_from_slice(p);
        self.q.extend_from_slice(q);
        for (inc, l) in self.increments.iter_mut().zip(comparator_losses) {
            inc.push(record.exp_loss - l);
        }
        self.rounds.push(record);
    }

    /// Replaces the reported rate of the first `count` rounds.
    pub fn backfill_eta(&mut self, count: usize, eta: f64) {
        for r in self.rounds.iter_mut().take(count) {
            r.eta = eta;
        }
    }

    pub fn record_violation(&mut self, violation: AuditViolation) {
        self.violations.push(violation);
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn horizon(&self) -> usize {
        self.rounds.len()
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.rounds
    }

    /// `p_t` for 1-based `t`.
    pub fn p_at(&self, t: usize) -> &[f64] {
        &self.p[(t - 1) * self.arms..t * self.arms]
    }

    /// `q_t` for 1-based `t`.
    pub fn q_at(&self, t: usize) -> &[f64] {
        &self.q[(t - 1) * self.arms..t * self.arms]
    }

    pub fn chosen_arms(&self) -> Vec<usize> {
        self.rounds.iter().map(|r| r.arm).collect()
    }

    pub fn etas(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.eta).collect()
    }

    pub fn comparator_ids(&self) -> &[String] {
        &self.comparator_ids
    }

    pub fn violations(&self) -> &[AuditViolation] {
        &self.violations
    }

    /// Number of violations per audit check.
    pub fn violation_counts(&self) -> BTreeMap<AuditCheck, usize> {
        let mut counts = BTreeMap::new();
        for v in &self.violations {
            *counts.entry(v.check).or_default() += 1;
        }
        counts
    }

    pub fn increments(&self, comparator: usize) -> &[f64] {
        &self.increments[comparator]
    }

    /// Running sums of the increments.
    pub fn cumulative(&self, comparator: usize) -> Vec<f64> {
        self.increments[comparator]
            .iter()
            .scan(0.0, |acc, x| {
                *acc += x;
                Some(*acc)
            })
            .collect()
    }

    /// Regret at the horizon: the plain left-to-right sum of the
    /// increments, so it equals the last cumulative entry bit for bit.
    pub fn regret(&self, comparator: usize) -> f64 {
        self.increments[comparator].iter().fold(0.0, |acc, x| acc + x)
    }

    pub fn regret_by_id(&self, id: &str) -> Option<f64> {
        self.comparator_ids.iter().position(|c| c == id).map(|j| self.regret(j))
    }

    /// Header `t,arm,eta,eps,exp_loss,regret_<id>...`; `arm` is 1-based.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut header = String::from("t,arm,eta,eps,exp_loss");
        for id in &self.comparator_ids {
            header.push_str(",regret_");
            header.push_str(id);
        }
        writeln!(out, "{header}")?;
        let cumulative: Vec<Vec<f64>> = (0..self.comparator_ids.len()).map(|j| self.cumulative(j)).collect();
        for (i, r) in self.rounds.iter().enumerate() {
            let mut line = format!(
                "{},{},{},{},{}",
                r.t,
                r.arm + 1,
                fmt_g12(r.eta),
                fmt_g12(r.eps),
                fmt_g12(r.exp_loss)
            );
            for c in &cumulative {
                line.push(',');
                line.push_str(&fmt_g12(c[i]));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// `sum_t (sum_m q_{t,m} l_{t,m} - l_{t,s_t})` for an arbitrary arm path
/// (0-based arms, one per round).
pub fn expected_regret(ledger: &RegretLedger, path: &[usize], model: &LossModel) -> Result<f64> {
    let mut total = 0.0;
    for (i, &arm) in path.iter().enumerate().take(ledger.horizon()) {
        let t = i + 1;
        let losses = model.losses_at(t)?.losses;
        let expected: f64 = ledger.q_at(t).iter().zip(&losses).map(|(q, l)| q * l).sum();
        total += expected - losses[arm];
    }
    Ok(total)
}
