//! One round of the selection algorithm over an equivalence-class weight
//! table: marginalise classes to arms, normalise, mix with the uniform
//! distribution, sample, apply the exponential update and share mass
//! through the kernel with power normalisation.
//!
//! All weights live in the log domain. After every transition the table is
//! shifted so that its largest log-weight is zero; the removed constant is
//! accumulated in `log_offset` so the absolute mass stays recoverable.

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::ComparatorKernel;
use crate::numerics::{exp_nonpos, logsumexp, max_of};

/// Log-domain weights over `Omega_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    round: usize,
    log_weights: Vec<f64>,
    log_offset: f64,
}

impl WeightTable {
    pub fn round(&self) -> usize {
        self.round
    }

    /// Log-weights relative to `log_offset`, in the kernel's index order.
    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn log_offset(&self) -> f64 {
        self.log_offset
    }

    /// `ln sum_lambda w_lambda` including the tracked offset.
    pub fn log_total_mass(&self) -> f64 {
        logsumexp(&self.log_weights) + self.log_offset
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    /// Entries may be `-inf` (unreachable classes) but never NaN or `+inf`,
    /// and at least one entry carries mass.
    pub fn check(&self) -> Result<()> {
        if self.log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(Error::Internal(format!("round {}: non-finite class weight", self.round)));
        }
        if !self.log_weights.iter().any(|w| w.is_finite()) {
            return Err(Error::NumericalCollapse { round: self.round });
        }
        Ok(())
    }
}

/// Weights after the exponential update, before sharing.
#[derive(Debug, Clone, PartialEq)]
pub struct ZTable {
    round: usize,
    log_z: Vec<f64>,
    log_offset: f64,
}

impl ZTable {
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn log_z(&self) -> &[f64] {
        &self.log_z
    }

    pub fn log_total_mass(&self) -> f64 {
        logsumexp(&self.log_z) + self.log_offset
    }
}

/// Algorithmic probabilities `p` and selection probabilities `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmDistribution {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub epsilon: f64,
}

impl ArmDistribution {
    pub fn arms(&self) -> usize {
        self.p.len()
    }
}

/// Table for round 1 holding the kernel's prior.
pub fn init_table<K: ComparatorKernel + ?Sized>(kernel: &K) -> Result<WeightTable> {
    let prior = kernel.initial_prior();
    if prior.is_empty() {
        return Err(Error::Config("kernel has no classes".into()));
    }
    let log_weights: Vec<f64> = prior.iter().map(|(_, w)| w.ln()).collect();
    let table = WeightTable {
        round: 1,
        log_weights,
        log_offset: 0.0,
    };
    table.check()?;
    Ok(table)
}

fn check_layout(arms: &[usize], table: &WeightTable) -> Result<()> {
    if arms.len() != table.len() {
        return Err(Error::Internal(format!(
            "round {}: kernel resolved {} classes for a table of {}",
            table.round,
            arms.len(),
            table.len()
        )));
    }
    Ok(())
}

/// Log-weight of each arm: log-sum-exp over the classes currently playing it.
pub fn arm_weights<K: ComparatorKernel + ?Sized>(
    table: &WeightTable,
    kernel: &K,
    context: Option<usize>,
) -> Result<Vec<f64>> {
    let m = kernel.arms();
    let arms = kernel.arms_at(table.round, context)?;
    check_layout(&arms, table)?;
    // One pass against the table-wide peak; arms whose mass underflows
    // relative to it are redone against their own peak.
    let top = max_of(&table.log_weights);
    let mut sums = vec![0.0; m];
    let mut peak = vec![f64::NEG_INFINITY; m];
    for (&arm, &lw) in arms.iter().zip(&table.log_weights) {
        sums[arm] += exp_nonpos(lw - top);
        peak[arm] = peak[arm].max(lw);
    }
    let mut out = vec![f64::NEG_INFINITY; m];
    for arm in 0..m {
        if peak[arm] == f64::NEG_INFINITY {
            continue;
        }
        out[arm] = if sums[arm] > f64::MIN_POSITIVE * 1e3 {
            top + sums[arm].ln()
        } else {
            let own = arms
                .iter()
                .zip(&table.log_weights)
                .filter(|(a, _)| **a == arm)
                .map(|(_, &lw)| exp_nonpos(lw - peak[arm]))
                .sum::<f64>();
            peak[arm] + own.ln()
        };
    }
    Ok(out)
}

/// `p = softmax(arm_log_weights)`, `q = (1 - eps) p + eps / M`.
pub fn normalize_mix(arm_log_weights: &[f64], epsilon: f64) -> Result<ArmDistribution> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Config(format!("exploration rate {epsilon} outside [0, 1]")));
    }
    let peak = max_of(arm_log_weights);
    if !peak.is_finite() || arm_log_weights.iter().any(|w| w.is_nan()) {
        return Err(Error::NumericalCollapse { round: 0 });
    }
    let raw: Vec<f64> = arm_log_weights.iter().map(|&w| (w - peak).exp()).collect();
    let total: f64 = raw.iter().sum();
    let m = arm_log_weights.len() as f64;
    let p: Vec<f64> = raw.iter().map(|r| r / total).collect();
    let q = p.iter().map(|&pm| (1.0 - epsilon) * pm + epsilon / m).collect();
    Ok(ArmDistribution { p, q, epsilon })
}

/// Inverse-CDF draw over arms in ascending order using exactly one uniform
/// variate. A variate landing on a boundary goes to the lower arm; arms with
/// zero probability are never returned.
pub fn sample_arm<R: Rng + ?Sized>(dist: &ArmDistribution, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (m, &qm) in dist.q.iter().enumerate() {
        if qm <= 0.0 {
            continue;
        }
        last_positive = m;
        cumulative += qm;
        if u <= cumulative {
            return m;
        }
    }
    last_positive
}

/// `ln z = ln w - eta_prev * phi[arm_of(lambda)]`.
///
/// The caller is responsible for `-eta_prev * phi_m <= 1`; see
/// [`check_exponent_bound`].
pub fn exponential_update<K: ComparatorKernel + ?Sized>(
    table: &WeightTable,
    phi: &[f64],
    kernel: &K,
    context: Option<usize>,
    eta_prev: f64,
) -> Result<ZTable> {
    if phi.len() != kernel.arms() {
        return Err(Error::Internal(format!(
            "performance vector has {} entries for {} arms",
            phi.len(),
            kernel.arms()
        )));
    }
    let arms = kernel.arms_at(table.round, context)?;
    check_layout(&arms, table)?;
    let log_z = table
        .log_weights
        .iter()
        .zip(&arms)
        .map(|(&lw, &arm)| if eta_prev == 0.0 { lw } else { lw - eta_prev * phi[arm] })
        .collect();
    Ok(ZTable {
        round: table.round,
        log_z,
        log_offset: table.log_offset,
    })
}

/// Largest `-eta * phi_m`; the exponential update is admissible when this is
/// at most one.
pub fn exponent_excess(phi: &[f64], eta: f64) -> f64 {
    phi.iter().map(|&f| -eta * f).fold(f64::NEG_INFINITY, f64::max)
}

pub fn check_exponent_bound(phi: &[f64], eta: f64, round: usize) -> Result<()> {
    let worst = exponent_excess(phi, eta);
    if worst > 1.0 + 1e-12 {
        return Err(Error::Assumption {
            round,
            check: crate::error::AuditCheck::ExponentBound,
            detail: format!("-eta*phi reaches {worst}"),
        });
    }
    Ok(())
}

/// `ln w'_{next} = ln sum_lambda T(next|lambda) z_lambda^{eta_ratio}`, then
/// shifted so the largest entry is zero.
pub fn transition<K: ComparatorKernel + ?Sized>(
    z: &ZTable,
    kernel: &K,
    eta_ratio: f64,
) -> Result<WeightTable> {
    if !(eta_ratio > 0.0 && eta_ratio <= 1.0) {
        return Err(Error::Internal(format!(
            "round {}: learning-rate ratio {eta_ratio} outside (0, 1]",
            z.round
        )));
    }
    let powered: Vec<f64> = z.log_z.iter().map(|&l| eta_ratio * l).collect();
    let mut next = kernel.propagate(&powered, z.round);
    if next.len() != kernel.class_count(z.round + 1) {
        return Err(Error::Internal(format!(
            "kernel produced {} classes for round {}, expected {}",
            next.len(),
            z.round + 1,
            kernel.class_count(z.round + 1)
        )));
    }
    let shift = max_of(&next);
    if !shift.is_finite() {
        return Err(Error::NumericalCollapse { round: z.round + 1 });
    }
    for w in &mut next {
        *w -= shift;
    }
    let table = WeightTable {
        round: z.round + 1,
        log_weights: next,
        log_offset: eta_ratio * z.log_offset + shift,
    };
    table.check()?;
    Ok(table)
}

/// Owns a kernel reference and the current table.
#[derive(Debug, Clone)]
pub struct Learner<'k, K: ComparatorKernel + ?Sized> {
    kernel: &'k K,
    table: WeightTable,
}

impl<'k, K: ComparatorKernel + ?Sized> Learner<'k, K> {
    pub fn new(kernel: &'k K) -> Result<Self> {
        Ok(Learner {
            kernel,
            table: init_table(kernel)?,
        })
    }

    pub fn table(&self) -> &WeightTable {
        &self.table
    }

    pub fn kernel(&self) -> &'k K {
        self.kernel
    }

    pub fn distribution(&self, context: Option<usize>, epsilon: f64) -> Result<ArmDistribution> {
        let weights = arm_weights(&self.table, self.kernel, context)?;
        normalize_mix(&weights, epsilon).map_err(|e| match e {
            Error::NumericalCollapse { .. } => Error::NumericalCollapse { round: self.table.round },
            other => other,
        })
    }

    /// Exponential update with `eta_prev` followed by a transition with
    /// `eta_ratio`.
    pub fn update(&mut self, phi: &[f64], context: Option<usize>, eta_prev: f64, eta_ratio: f64) -> Result<()> {
        let z = exponential_update(&self.table, phi, self.kernel, context, eta_prev)?;
        self.table = transition(&z, self.kernel, eta_ratio)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelHandle;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exp_all(xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|x| x.exp()).collect()
    }

    #[test]
    fn init_fixed_and_switching() {
        let k = KernelHandle::fixed(4).unwrap();
        let t = init_table(&k).unwrap();
        assert_eq!(t.round(), 1);
        for w in exp_all(t.log_weights()) {
            assert!((w - 0.25).abs() < 1e-15);
        }
        let k = KernelHandle::fixed(1).unwrap();
        assert_eq!(init_table(&k).unwrap().log_weights(), &[0.0]);
        let k = KernelHandle::switching(3).unwrap();
        let t = init_table(&k).unwrap();
        assert_eq!(t.len(), 3);
        for w in exp_all(t.log_weights()) {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn arm_weights_fixed_identity() {
        let k = KernelHandle::fixed(4).unwrap();
        let t = init_table(&k).unwrap();
        let aw = arm_weights(&t, &k, None).unwrap();
        for w in aw {
            assert!((w - 0.25f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn arm_weights_contextual_by_hand() {
        // Mappings (index = m0 + 2 m1): [0,0]=0, [1,0]=1, [0,1]=2, [1,1]=3.
        let k = KernelHandle::contextual(2, 2).unwrap();
        let t = init_table(&k).unwrap();
        let w = exp_all(t.log_weights());
        // Context 0 -> arm 0 for mappings [0,0] and [0,1].
        let aw = exp_all(&arm_weights(&t, &k, Some(0)).unwrap());
        assert!((aw[0] - (w[0] + w[2])).abs() < 1e-15);
        assert!((aw[1] - (w[1] + w[3])).abs() < 1e-15);
        let aw = exp_all(&arm_weights(&t, &k, Some(1)).unwrap());
        assert!((aw[0] - (w[0] + w[1])).abs() < 1e-15);
        assert!(matches!(arm_weights(&t, &k, None), Err(Error::Context { .. })));
    }

    #[test]
    fn arm_weights_periodic_phase() {
        // Pattern (0,1) of period 2 plays arm 0 at t = 3.
        let k = KernelHandle::periodic(2, 2).unwrap();
        let idx = k.index_of(&crate::kernels::ClassState::Periodic { pattern: vec![0, 1] }, 3).unwrap();
        assert_eq!(k.arm_of_index(idx, 3, None).unwrap(), 0);
        assert_eq!(k.arm_of_index(idx, 4, None).unwrap(), 1);
    }

    #[test]
    fn normalize_mix_examples() {
        let d = normalize_mix(&[2f64.ln(), 2f64.ln()], 0.0).unwrap();
        assert_eq!(d.p, vec![0.5, 0.5]);
        assert_eq!(d.q, vec![0.5, 0.5]);
        let d = normalize_mix(&[0.0, f64::NEG_INFINITY], 0.5).unwrap();
        assert_eq!(d.q, vec![0.75, 0.25]);
        let d = normalize_mix(&[0.0, -1000.0], 0.1).unwrap();
        assert!((d.q[0] - 0.95).abs() < 1e-12 && (d.q[1] - 0.05).abs() < 1e-12);
        assert!(matches!(
            normalize_mix(&[f64::NEG_INFINITY; 2], 0.1),
            Err(Error::NumericalCollapse { .. })
        ));
        assert!(normalize_mix(&[0.0], 1.5).is_err());
    }

    #[test]
    fn sampling_degenerate_and_reproducible() {
        let one = ArmDistribution { p: vec![1.0, 0.0], q: vec![1.0, 0.0], epsilon: 0.0 };
        let two = ArmDistribution { p: vec![0.0, 1.0], q: vec![0.0, 1.0], epsilon: 0.0 };
        let half = ArmDistribution { p: vec![0.5, 0.5], q: vec![0.5, 0.5], epsilon: 0.0 };
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            assert_eq!(sample_arm(&one, &mut rng), 0);
            assert_eq!(sample_arm(&two, &mut rng), 1);
        }
        let draws = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..16).map(|_| sample_arm(&half, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draws(7), draws(7));
        // Golden draw for seed 7 under ChaCha8.
        assert_eq!(draws(7), GOLDEN_SEED7);
    }

    const GOLDEN_SEED7: [usize; 16] = [0, 0, 1, 1, 1, 0, 0, 1, 0, 1, 0, 0, 1, 0, 0, 1];

    #[test]
    fn exponential_update_examples() {
        let k = KernelHandle::fixed(2).unwrap();
        let t = init_table(&k).unwrap();
        let z = exponential_update(&t, &[0.3, -0.2], &k, None, 0.0).unwrap();
        assert_eq!(z.log_z(), t.log_weights());
        let z = exponential_update(&t, &[0.0, 1.0], &k, None, 1.0).unwrap();
        let zz = exp_all(z.log_z());
        assert!((zz[0] - 0.5).abs() < 1e-15);
        assert!((zz[1] - 0.5 * (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn constant_phi_leaves_probabilities() {
        let k = KernelHandle::switching(3).unwrap();
        let mut a = Learner::new(&k).unwrap();
        let mut b = Learner::new(&k).unwrap();
        a.update(&[0.1, 0.9, 0.4], None, 0.7, 1.0).unwrap();
        b.update(&[0.1, 0.9, 0.4], None, 0.7, 1.0).unwrap();
        a.update(&[0.2, 0.3, 0.5], None, 0.6, 0.6 / 0.7).unwrap();
        b.update(&[5.2, 5.3, 5.5], None, 0.6, 0.6 / 0.7).unwrap();
        let (pa, pb) = (a.distribution(None, 0.0).unwrap(), b.distribution(None, 0.0).unwrap());
        for (x, y) in pa.p.iter().zip(&pb.p) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn transition_fixed_is_identity() {
        let k = KernelHandle::fixed(3).unwrap();
        let t = init_table(&k).unwrap();
        let z = exponential_update(&t, &[0.0, 1.0, 2.0], &k, None, 0.5).unwrap();
        let next = transition(&z, &k, 1.0).unwrap();
        let diff = next.log_offset();
        for (a, b) in next.log_weights().iter().zip(z.log_z()) {
            assert!((a + diff - b).abs() < 1e-14);
        }
    }

    #[test]
    fn transition_switching_by_hand() {
        // M=2, z = [1, 1] at tau = 1: each arm keeps 1/2 at age 2 and
        // receives 1/2 at age 1.
        let k = KernelHandle::switching(2).unwrap();
        let z = ZTable { round: 1, log_z: vec![0.0, 0.0], log_offset: 0.0 };
        let next = transition(&z, &k, 1.0).unwrap();
        let w: Vec<f64> = next.log_weights().iter().map(|l| (l + next.log_offset()).exp()).collect();
        for x in w {
            assert!((x - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn half_power_equals_sqrt_input() {
        let k = KernelHandle::periodic(2, 2).unwrap();
        let lz = vec![-0.3, 0.2, -1.1, 0.0, 0.4, -2.0];
        let z = ZTable { round: 2, log_z: lz.clone(), log_offset: 0.0 };
        let sqrt = ZTable { round: 2, log_z: lz.iter().map(|l| 0.5 * l).collect(), log_offset: 0.0 };
        let a = transition(&z, &k, 0.5).unwrap();
        let b = transition(&sqrt, &k, 1.0).unwrap();
        assert!((a.log_total_mass() - b.log_total_mass()).abs() < 1e-13);
        for (x, y) in a.log_weights().iter().zip(b.log_weights()) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn transition_rejects_bad_ratio() {
        let k = KernelHandle::fixed(2).unwrap();
        let z = ZTable { round: 1, log_z: vec![0.0, 0.0], log_offset: 0.0 };
        assert!(transition(&z, &k, 0.0).is_err());
        assert!(transition(&z, &k, 1.5).is_err());
    }

    #[test]
    fn mass_conservation() {
        for (k, conserved) in [
            (KernelHandle::fixed(3).unwrap(), true),
            (KernelHandle::switching(3).unwrap(), true),
            (KernelHandle::contextual(2, 2).unwrap(), false),
            (KernelHandle::periodic(2, 2).unwrap(), false),
        ] {
            let mut learner = Learner::new(&k).unwrap();
            let mut mass = learner.table().log_total_mass();
            for _ in 0..12 {
                learner.update(&[0.0; 3][..k.arms()], Some(0), 0.3, 1.0).unwrap();
                let now = learner.table().log_total_mass();
                if conserved {
                    assert!((now - mass).abs() < 1e-12, "{:?}", k.family());
                } else {
                    assert!(now <= mass + 1e-12);
                }
                mass = now;
            }
        }
    }
}
