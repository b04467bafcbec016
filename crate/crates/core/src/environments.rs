//! Deterministic adversarial loss generators.
//!
//! Every family puts loss 0 on a designated best arm and `gap` on the
//! others, optionally perturbed by seeded uniform noise in `[0, noise)`; the
//! affine map `l -> scale * l + shift` is applied last. Contexts are
//! 0-based and follow the cyclic stream `c_t = (t - 1) mod N`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LossFamily {
    FixedGap { gap: f64, best: usize },
    /// Segment `k` starts at `switch_rounds[k-1]` and its best arm is
    /// `(first_best + k) mod M`.
    Switching { gap: f64, first_best: usize, switch_rounds: Vec<usize> },
    /// Best arm under context `c` is `mapping[c]`.
    Contextual { gap: f64, mapping: Vec<usize> },
    /// Best arm at round `t` is `pattern[(t - 1) mod len]`.
    Periodic { gap: f64, pattern: Vec<usize> },
    /// Fixed gap scaled by `1 + ramp * (t - 1) / (T - 1)`.
    DriftingScale { gap: f64, best: usize, ramp: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub scale: f64,
    pub shift: f64,
}

impl Affine {
    pub const IDENTITY: Affine = Affine { scale: 1.0, shift: 0.0 };

    pub fn apply(&self, loss: f64) -> f64 {
        self.scale * loss + self.shift
    }
}

impl Default for Affine {
    fn default() -> Self {
        Affine::IDENTITY
    }
}

/// Losses (and context) of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundLosses {
    pub losses: Vec<f64>,
    pub context: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    family: LossFamily,
    arms: usize,
    horizon: usize,
    seed: u64,
    noise: f64,
    affine: Affine,
}

/// `S` switch rounds spread evenly over `1..=T`.
pub fn evenly_spaced_switches(horizon: usize, switches: usize) -> Vec<usize> {
    (1..=switches).map(|k| k * horizon / (switches + 1) + 1).collect()
}

impl LossModel {
    pub fn new(family: LossFamily, arms: usize, horizon: usize) -> Result<Self> {
        if arms == 0 {
            return Err(Error::Config("environment needs at least one arm".into()));
        }
        if horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        let arm_ok = |a: &usize| *a < arms;
        let valid = match &family {
            LossFamily::FixedGap { best, .. } | LossFamily::DriftingScale { best, .. } => arm_ok(best),
            LossFamily::Switching { first_best, switch_rounds, .. } => {
                arm_ok(first_best) && switch_rounds.windows(2).all(|w| w[0] < w[1])
            }
            LossFamily::Contextual { mapping, .. } => !mapping.is_empty() && mapping.iter().all(arm_ok),
            LossFamily::Periodic { pattern, .. } => !pattern.is_empty() && pattern.iter().all(arm_ok),
        };
        if !valid {
            return Err(Error::Config(format!("invalid environment parameters {family:?} for {arms} arms")));
        }
        Ok(LossModel {
            family,
            arms,
            horizon,
            seed: 0,
            noise: 0.0,
            affine: Affine::IDENTITY,
        })
    }

    pub fn fixed_gap(arms: usize, gap: f64, horizon: usize) -> Result<Self> {
        Self::new(LossFamily::FixedGap { gap, best: 0 }, arms, horizon)
    }

    /// `switches` evenly spaced switches, best arm cycling from arm 0.
    pub fn switching(arms: usize, gap: f64, switches: usize, horizon: usize) -> Result<Self> {
        let switch_rounds = evenly_spaced_switches(horizon, switches);
        Self::new(LossFamily::Switching { gap, first_best: 0, switch_rounds }, arms, horizon)
    }

    /// `N` contexts, best arm `c mod M` under context `c`.
    pub fn contextual(arms: usize, contexts: usize, gap: f64, horizon: usize) -> Result<Self> {
        let mapping = (0..contexts).map(|c| c % arms).collect();
        Self::new(LossFamily::Contextual { gap, mapping }, arms, horizon)
    }

    pub fn periodic(arms: usize, pattern: Vec<usize>, gap: f64, horizon: usize) -> Result<Self> {
        Self::new(LossFamily::Periodic { gap, pattern }, arms, horizon)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_affine(mut self, affine: Affine) -> Self {
        self.affine = affine;
        self
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        if let LossFamily::Switching { switch_rounds, .. } = &mut self.family {
            let n = switch_rounds.len();
            *switch_rounds = evenly_spaced_switches(horizon, n);
        }
        self.horizon = horizon;
        self
    }

    pub fn family(&self) -> &LossFamily {
        &self.family
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn affine(&self) -> Affine {
        self.affine
    }

    pub fn gap(&self) -> f64 {
        match &self.family {
            LossFamily::FixedGap { gap, .. }
            | LossFamily::Switching { gap, .. }
            | LossFamily::Contextual { gap, .. }
            | LossFamily::Periodic { gap, .. }
            | LossFamily::DriftingScale { gap, .. } => *gap,
        }
    }

    pub fn contexts(&self) -> Option<usize> {
        match &self.family {
            LossFamily::Contextual { mapping, .. } => Some(mapping.len()),
            _ => None,
        }
    }

    pub fn context_at(&self, round: usize) -> Option<usize> {
        self.contexts().map(|n| (round - 1) % n)
    }

    /// Context of every round `1..=T`.
    pub fn context_stream(&self) -> Vec<Option<usize>> {
        (1..=self.horizon).map(|t| self.context_at(t)).collect()
    }

    /// Arm with the smallest noiseless loss at `round`.
    pub fn best_arm(&self, round: usize) -> usize {
        match &self.family {
            LossFamily::FixedGap { best, .. } | LossFamily::DriftingScale { best, .. } => *best,
            LossFamily::Switching { first_best, switch_rounds, .. } => {
                let segment = switch_rounds.partition_point(|&s| s <= round);
                (first_best + segment) % self.arms
            }
            LossFamily::Contextual { mapping, .. } => mapping[(round - 1) % mapping.len()],
            LossFamily::Periodic { pattern, .. } => pattern[(round - 1) % pattern.len()],
        }
    }

    fn round_scale(&self, round: usize) -> f64 {
        match &self.family {
            LossFamily::DriftingScale { ramp, .. } if self.horizon > 1 => {
                1.0 + ramp * (round - 1) as f64 / (self.horizon - 1) as f64
            }
            _ => 1.0,
        }
    }

    /// Losses before the affine map.
    pub fn raw_losses_at(&self, round: usize) -> Result<Vec<f64>> {
        if round == 0 || round > self.horizon {
            return Err(Error::RoundOutOfRange { round, horizon: self.horizon });
        }
        let best = self.best_arm(round);
        let gap = self.gap() * self.round_scale(round);
        let mut losses: Vec<f64> = (0..self.arms).map(|m| if m == best { 0.0 } else { gap }).collect();
        if self.noise > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(round as u64);
            for l in &mut losses {
                *l += self.noise * rng.random::<f64>();
            }
        }
        Ok(losses)
    }

    pub fn losses_at(&self, round: usize) -> Result<RoundLosses> {
        let losses = self
            .raw_losses_at(round)?
            .into_iter()
            .map(|l| self.affine.apply(l))
            .collect();
        Ok(RoundLosses { losses, context: self.context_at(round) })
    }

    /// Full `T x M` loss matrix after the affine map.
    pub fn loss_matrix(&self) -> Vec<Vec<f64>> {
        (1..=self.horizon)
            .map(|t| self.losses_at(t).expect("round in range").losses)
            .collect()
    }

    /// Writes `t,m,loss` rows (1-based `t` and `m`).
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,m,loss")?;
        for t in 1..=self.horizon {
            let round = self.losses_at(t).expect("round in range");
            for (m, l) in round.losses.iter().enumerate() {
                writeln!(out, "{t},{},{l}", m + 1)?;
            }
        }
        Ok(())
    }
}

/// Per-round loss ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranges {
    /// `Delta_t = max_m l - min_m l`.
    pub delta: Vec<f64>,
    /// `Delta~_t` over rounds `t-1, t`, with `l_0 := l_1`.
    pub extended: Vec<f64>,
}

impl Ranges {
    pub fn from_matrix(matrix: &[Vec<f64>]) -> Self {
        let span = |rows: &[&Vec<f64>]| {
            let it = rows.iter().flat_map(|r| r.iter().copied());
            let max = it.clone().fold(f64::NEG_INFINITY, f64::max);
            let min = it.fold(f64::INFINITY, f64::min);
            max - min
        };
        let delta = matrix.iter().map(|r| span(&[r])).collect();
        let extended = matrix
            .iter()
            .enumerate()
            .map(|(i, r)| span(&[&matrix[i.saturating_sub(1)], r]))
            .collect();
        Ranges { delta, extended }
    }

    pub fn max_delta(&self) -> f64 {
        self.delta.iter().copied().fold(0.0, f64::max)
    }

    pub fn sum_sq_delta(&self) -> f64 {
        self.delta.iter().map(|d| d * d).sum()
    }

    pub fn max_extended(&self) -> f64 {
        self.extended.iter().copied().fold(0.0, f64::max)
    }

    pub fn sum_sq_extended(&self) -> f64 {
        self.extended.iter().map(|d| d * d).sum()
    }
}

pub fn ranges(model: &LossModel) -> Ranges {
    Ranges::from_matrix(&model.loss_matrix())
}
