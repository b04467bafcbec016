use proptest::prelude::*;

use compete::engine::{arm_weights, init_table, normalize_mix, Learner};
use compete::environments::{Affine, LossModel};
use compete::harness::verify::{affine_comparison, oracle_agreement, replay_engine};
use compete::harness::oracle::path_count;
use compete::harness::{brute_force_oracle, ORACLE_PATH_CAP, run_episode, Comparator, ComparatorSpec, EpisodeConfig};
use compete::kernels::{propagate_by_rows, ComparatorKernel, KernelHandle};
use compete::schedules::{phi_bandit, phi_full_centered, Mode, ScheduleState};

fn kernel_strategy() -> impl Strategy<Value = KernelHandle> {
    prop_oneof![
        (1usize..=4).prop_map(|m| KernelHandle::fixed(m).unwrap()),
        (1usize..=4).prop_map(|m| KernelHandle::switching(m).unwrap()),
        (1usize..=3, 1usize..=3).prop_map(|(m, n)| KernelHandle::contextual(m, n).unwrap()),
        (1usize..=3, 1usize..=2).prop_map(|(m, b)| KernelHandle::periodic(m, b).unwrap()),
    ]
}

fn mode_strategy() -> impl Strategy<Value = Mode> {
    prop_oneof![Just(Mode::FullCentered), Just(Mode::FullMinShift), Just(Mode::Bandit)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixed_distribution_on_simplex(
        weights in prop::collection::vec(-50.0f64..50.0, 1..8),
        eps in 0.0f64..=1.0,
    ) {
        let d = normalize_mix(&weights, eps).unwrap();
        let m = weights.len() as f64;
        prop_assert!((d.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!((d.q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for &q in &d.q {
            prop_assert!(q >= eps / m * (1.0 - 1e-12));
        }
    }

    #[test]
    fn common_log_shift_leaves_p_unchanged(
        weights in prop::collection::vec(-30.0f64..30.0, 2..6),
        shift in -500.0f64..500.0,
    ) {
        let a = normalize_mix(&weights, 0.0).unwrap();
        let moved: Vec<f64> = weights.iter().map(|w| w + shift).collect();
        let b = normalize_mix(&moved, 0.0).unwrap();
        for (x, y) in a.p.iter().zip(&b.p) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn structured_propagation_matches_rows(
        kernel in kernel_strategy(),
        round in 1usize..6,
        seed in any::<u64>(),
    ) {
        let n = kernel.class_count(round);
        let mut state = seed;
        let powered: Vec<f64> = (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                -((state >> 11) as f64 / (1u64 << 53) as f64) * 20.0
            })
            .collect();
        let fast = kernel.propagate(&powered, round);
        let slow = propagate_by_rows(&kernel, &powered, round);
        prop_assert_eq!(fast.len(), kernel.class_count(round + 1));
        for (a, b) in fast.iter().zip(&slow) {
            // Unreachable classes (single-arm switching) are -inf on both sides.
            prop_assert!(a == b || (a - b).abs() < 1e-10, "{} vs {}", a, b);
        }
    }

    #[test]
    fn reachable_classes_match_reported_counts(kernel in kernel_strategy(), rounds in 1usize..6) {
        // Repeated transitions from the prior populate exactly Omega_t.
        let mut table = init_table(&kernel).unwrap().log_weights().to_vec();
        prop_assert_eq!(table.len(), kernel.class_count(1));
        for t in 1..rounds {
            table = kernel.propagate(&table, t);
            prop_assert_eq!(table.len(), kernel.class_count(t + 1));
            // With one arm no switch ever happens, so fresh ages stay empty.
            if kernel.arms() > 1 {
                prop_assert!(table.iter().all(|w| w.is_finite()));
            } else {
                prop_assert!(table.iter().any(|w| w.is_finite()));
            }
        }
    }

    #[test]
    fn engine_matches_oracle(kernel in kernel_strategy(), mode in mode_strategy(), seed in any::<u64>()) {
        prop_assume!(path_count(&kernel, 5) <= ORACLE_PATH_CAP);
        let a = oracle_agreement(&kernel, mode, 0.8, 5, seed).unwrap();
        prop_assert!(a.max_abs_diff < 1e-9, "{:?}", a);
    }

    #[test]
    fn rates_never_increase(
        phis in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 1..40),
        mode in mode_strategy(),
        w in 0.01f64..10.0,
    ) {
        let kernel = KernelHandle::switching(3).unwrap();
        let contexts = vec![None; phis.len()];
        let r = replay_engine(&kernel, mode, w, &phis, &contexts).unwrap();
        prop_assert!(r.etas.windows(2).all(|e| e[1] <= e[0]));
        for p in &r.p {
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bandit_estimate_is_unbiased(
        losses in prop::collection::vec(0.0f64..5.0, 2..6),
        raw_q in prop::collection::vec(0.05f64..1.0, 6),
        prev in -3.0f64..3.0,
    ) {
        // E_{i~q}[phi(i)] = l - prev, coordinate-wise.
        let m = losses.len();
        let total: f64 = raw_q[..m].iter().sum();
        let q: Vec<f64> = raw_q[..m].iter().map(|x| x / total).collect();
        let mut mean = vec![0.0; m];
        for i in 0..m {
            let phi = phi_bandit(losses[i], i, &q, prev).unwrap();
            for k in 0..m {
                mean[k] += q[i] * phi[k];
            }
        }
        for k in 0..m {
            prop_assert!((mean[k] - (losses[k] - prev)).abs() < 1e-9);
        }
    }

    #[test]
    fn centered_performance_has_zero_mean(
        losses in prop::collection::vec(-5.0f64..5.0, 2..6),
        raw_p in prop::collection::vec(0.01f64..1.0, 6),
    ) {
        let m = losses.len();
        let total: f64 = raw_p[..m].iter().sum();
        let p: Vec<f64> = raw_p[..m].iter().map(|x| x / total).collect();
        let phi = phi_full_centered(&losses, &p);
        let mean: f64 = phi.iter().zip(&p).map(|(f, q)| f * q).sum();
        prop_assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn schedule_statistics_monotone(
        phis in prop::collection::vec(prop::collection::vec(-1.0f64..3.0, 2), 1..30),
    ) {
        let mut s = ScheduleState::new(Mode::FullCentered, 1.0).unwrap();
        let (mut v, mut d) = (0.0, 0.0);
        for phi in &phis {
            s.update_stats(phi, &[0.5, 0.5]);
            s.advance_eta();
            prop_assert!(s.cumulative_variance() >= v);
            prop_assert!(s.max_range() >= d);
            v = s.cumulative_variance();
            d = s.max_range();
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn affine_maps_do_not_change_choices(
        scale in 0.05f64..20.0,
        shift in -10.0f64..10.0,
        mode in mode_strategy(),
        seed in 0u64..1000,
    ) {
        let kernel = KernelHandle::switching(3).unwrap();
        let env = LossModel::switching(3, 1.0, 2, 150).unwrap().with_noise(0.4).with_seed(seed);
        let c = vec![Comparator::build("best", ComparatorSpec::EnvironmentBest, &kernel, &env).unwrap()];
        let cfg = EpisodeConfig::new(mode, c[0].complexity, seed);
        let cmp = affine_comparison(&kernel, &env, &c, &cfg, Affine { scale, shift }).unwrap();
        prop_assert!(cmp.within(1e-10, 1e-9), "{:?}", cmp);
    }

    #[test]
    fn regret_is_sum_of_increments(mode in mode_strategy(), seed in any::<u64>()) {
        let kernel = KernelHandle::fixed(3).unwrap();
        let env = LossModel::fixed_gap(3, 0.7, 120).unwrap().with_noise(0.5).with_seed(seed);
        let c = vec![
            Comparator::build("best", ComparatorSpec::EnvironmentBest, &kernel, &env).unwrap(),
            Comparator::build("worst", ComparatorSpec::Fixed { arm: 2 }, &kernel, &env).unwrap(),
        ];
        let ledger = run_episode(&kernel, &env, &c, &EpisodeConfig::new(mode, 1.0, seed)).unwrap();
        for j in 0..2 {
            let cum = ledger.cumulative(j);
            prop_assert_eq!(*cum.last().unwrap(), ledger.regret(j));
            prop_assert_eq!(ledger.increments(j).iter().fold(0.0, |a, x| a + x), ledger.regret(j));
        }
    }
}

#[test]
fn oracle_uniform_under_zero_performance() {
    for kernel in [
        KernelHandle::fixed(3).unwrap(),
        KernelHandle::switching(3).unwrap(),
        KernelHandle::contextual(2, 2).unwrap(),
        KernelHandle::periodic(2, 2).unwrap(),
    ] {
        let t = 5;
        let contexts: Vec<Option<usize>> = (0..t).map(|i| kernel.contexts().map(|n| i % n)).collect();
        let p = brute_force_oracle(&kernel, &vec![vec![0.0; kernel.arms()]; t], &[1.0; 6], &contexts).unwrap();
        let m = kernel.arms() as f64;
        for row in p {
            for x in row {
                assert!((x - 1.0 / m).abs() < 1e-12, "{} {x}", kernel.family());
            }
        }
    }
}

#[test]
fn learner_arm_weights_track_table() {
    let kernel = KernelHandle::switching(2).unwrap();
    let mut learner = Learner::new(&kernel).unwrap();
    learner.update(&[1.0, 0.0], None, 0.5, 1.0).unwrap();
    let w = arm_weights(learner.table(), &kernel, None).unwrap();
    let d = learner.distribution(None, 0.0).unwrap();
    let expected = normalize_mix(&w, 0.0).unwrap();
    assert_eq!(d.p, expected.p);
}
