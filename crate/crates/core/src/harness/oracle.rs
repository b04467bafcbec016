//! Brute-force reference for the engine.
//!
//! Keeps one linear-domain weight per class path instead of per class.
//! Each step multiplies every path by its exponential factor, rescales the
//! paths of each end class `lambda` by `Z_lambda^{r-1}` (so that the class
//! aggregate becomes `Z_lambda^r`) and extends it by every successor.
//! Marginalizing the end classes onto arms gives `p_t`. Nothing is shared
//! with the engine beyond the kernel's enumeration primitives.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::kernels::ComparatorKernel;

/// Largest number of simultaneously tracked paths.
pub const ORACLE_PATH_CAP: u128 = 4_000_000;

type Row = Vec<(usize, f64)>;

/// Number of positive-weight class paths ending in round `horizon`.
pub fn path_count<K: ComparatorKernel + ?Sized>(kernel: &K, horizon: usize) -> u128 {
    let mut counts: HashMap<usize, u128> = HashMap::new();
    for (state, w) in kernel.initial_prior() {
        if w > 0.0 {
            let i = kernel.index_of(&state, 1).expect("prior state in Omega_1");
            *counts.entry(i).or_default() += 1;
        }
    }
    for t in 1..horizon {
        let mut next: HashMap<usize, u128> = HashMap::new();
        for (&i, &n) in &counts {
            for (succ, w) in kernel.transitions(&kernel.state_at(i, t), t + 1) {
                if w > 0.0 {
                    let j = kernel.index_of(&succ, t + 1).expect("successor in Omega_{t+1}");
                    let e = next.entry(j).or_default();
                    *e = e.saturating_add(n);
                }
            }
        }
        counts = next;
    }
    counts.values().fold(0u128, |a, &b| a.saturating_add(b))
}

/// `p_1..p_T` from explicit path enumeration.
///
/// `phis[t-1]` is `phi_t`, `etas[t]` is `eta_t` for `t = 0..=T` (so
/// `etas.len() == phis.len() + 1`) and `contexts[t-1]` is the context of
/// round `t`. Refuses to run when more than [`ORACLE_PATH_CAP`] paths would
/// be alive at once.
pub fn brute_force_oracle<K: ComparatorKernel + ?Sized>(
    kernel: &K,
    phis: &[Vec<f64>],
    etas: &[f64],
    contexts: &[Option<usize>],
) -> Result<Vec<Vec<f64>>> {
    let horizon = phis.len();
    if etas.len() != horizon + 1 || contexts.len() < horizon {
        return Err(Error::Config(format!(
            "oracle needs {} rates and {horizon} contexts, got {} and {}",
            horizon + 1,
            etas.len(),
            contexts.len()
        )));
    }
    let paths_needed = path_count(kernel, horizon.max(1));
    if paths_needed > ORACLE_PATH_CAP {
        return Err(Error::OracleTooLarge { paths: paths_needed, cap: ORACLE_PATH_CAP });
    }
    let m = kernel.arms();

    // (end class index, weight)
    let mut paths: Vec<(usize, f64)> = kernel
        .initial_prior()
        .into_iter()
        .filter(|(_, w)| *w > 0.0)
        .map(|(s, w)| (kernel.index_of(&s, 1).expect("prior state in Omega_1"), w))
        .collect();
    let mut out = Vec::with_capacity(horizon);

    for t in 1..=horizon {
        let context = contexts[t - 1];
        let mut arm_cache: HashMap<usize, usize> = HashMap::new();
        let mut arm_of = |i: usize| -> Result<usize> {
            if let Some(&a) = arm_cache.get(&i) {
                return Ok(a);
            }
            let a = kernel.arm_of(&kernel.state_at(i, t), t, context)?;
            arm_cache.insert(i, a);
            Ok(a)
        };

        let mut mass = vec![0.0; m];
        for &(i, w) in &paths {
            mass[arm_of(i)?] += w;
        }
        let total: f64 = mass.iter().sum();
        if !(total > 0.0) {
            return Err(Error::NumericalCollapse { round: t });
        }
        out.push(mass.iter().map(|x| x / total).collect::<Vec<_>>());
        if t == horizon {
            break;
        }

        let (eta_prev, eta) = (etas[t - 1], etas[t]);
        for (i, w) in paths.iter_mut() {
            *w *= (-eta_prev * phis[t - 1][arm_of(*i)?]).exp();
        }
        let mut aggregate: HashMap<usize, f64> = HashMap::new();
        for &(i, w) in &paths {
            *aggregate.entry(i).or_default() += w;
        }
        let r = if eta_prev > 0.0 { eta / eta_prev } else { 1.0 };
        let scale: HashMap<usize, f64> = aggregate
            .into_iter()
            .map(|(i, z)| (i, if z > 0.0 { z.powf(r - 1.0) } else { 0.0 }))
            .collect();

        let mut rows: HashMap<usize, Row> = HashMap::new();
        let mut next = Vec::with_capacity(paths.len());
        for &(i, w) in &paths {
            let row = rows.entry(i).or_insert_with(|| {
                kernel
                    .transitions(&kernel.state_at(i, t), t + 1)
                    .into_iter()
                    .filter(|(_, p)| *p > 0.0)
                    .map(|(s, p)| (kernel.index_of(&s, t + 1).expect("successor in Omega_{t+1}"), p))
                    .collect()
            });
            let w = w * scale[&i];
            for &(j, p) in row.iter() {
                next.push((j, w * p));
            }
        }
        // A common factor does not change `p` and keeps the weights in range.
        let total: f64 = next.iter().map(|(_, w)| w).sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::NumericalCollapse { round: t + 1 });
        }
        for (_, w) in &mut next {
            *w /= total;
        }
        paths = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelHandle;

    #[test]
    fn zero_phi_keeps_fixed_uniform() {
        let k = KernelHandle::fixed(3).unwrap();
        let p = brute_force_oracle(&k, &vec![vec![0.0; 3]; 5], &[1.0; 6], &[None; 5]).unwrap();
        for row in p {
            for x in row {
                assert!((x - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn switching_three_rounds_by_hand() {
        // M = 2, eta = 1, phi_1 = (1, 0), later phi = 0. After round 1 the
        // arm weights are w0 = e^{-1}/2 and w1 = 1/2; the first transition
        // splits every class evenly, so p_2 is uniform. Into round 3, age-2
        // classes stay with 2/3 and age-1 classes with 1/2, so arm 0
        // collects w0 (1/2)(2/3) + w1 (1/2)(1/2) + w0 (1/2)(1/2) + w1 (1/2)(1/3).
        let k = KernelHandle::switching(2).unwrap();
        let phis = vec![vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]];
        let p = brute_force_oracle(&k, &phis, &[1.0; 4], &[None; 3]).unwrap();
        let (w0, w1) = ((-1f64).exp() / 2.0, 0.5);
        assert!((p[0][0] - 0.5).abs() < 1e-15);
        assert!((p[1][0] - 0.5).abs() < 1e-15);
        let expected = (7.0 * w0 + 5.0 * w1) / (12.0 * (w0 + w1));
        assert!((p[2][0] - expected).abs() < 1e-15);
    }

    #[test]
    fn path_counts_and_cap() {
        let k = KernelHandle::switching(2).unwrap();
        assert_eq!(path_count(&k, 1), 2);
        assert_eq!(path_count(&k, 2), 4);
        let k = KernelHandle::periodic(2, 2).unwrap();
        assert_eq!(path_count(&k, 8), 6u128.pow(8));
        let big = KernelHandle::switching(3).unwrap();
        assert_eq!(path_count(&big, 20), 3u128.pow(20));
        let err = brute_force_oracle(&big, &vec![vec![0.0; 3]; 20], &[1.0; 21], &[None; 20]).unwrap_err();
        assert!(matches!(err, Error::OracleTooLarge { .. }));
    }
}
