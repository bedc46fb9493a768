mod common;

use cmasep::channel::MultichannelSignal;
use cmasep::costs::{apply_filter, godard_cost, modified_cost};
use cmasep::cyclostats::{conj_cyclic_corr, cyclic_corr, freq_distance, wrap_freq};
use cmasep::deflation::reinit_filter;
use cmasep::eval::{match_streams, sinr};
use cmasep::experiment::{histogram, ExperimentConfig, Scenario};
use cmasep::sigmodel::rotation;
use cmasep::C64;
use common::*;
use proptest::prelude::*;

fn close(a: C64, b: C64, tol: f64) -> bool {
    (a - b).norm() <= tol * (1.0 + a.norm().max(b.norm()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filtering_is_linear(seed in 0u64..10_000, re in -2.0f64..2.0, im in -2.0f64..2.0) {
        let y = random_signal(3, 60, seed);
        let g1 = random_filter(3, 4, seed + 1, 1.0);
        let g2 = random_filter(3, 4, seed + 2, 1.0);
        let c = C64::new(re, im);
        let lhs = apply_filter(&g1.scaled(c).axpy(1.0, &g2), &y).unwrap();
        let a = apply_filter(&g1, &y).unwrap();
        let b = apply_filter(&g2, &y).unwrap();
        for i in 0..lhs.len() {
            prop_assert!(close(lhs[i], c * a[i] + b[i], 1e-12));
        }
    }

    #[test]
    fn filtering_matches_loops(seed in 0u64..10_000, n in 1usize..4, l in 0usize..5) {
        let y = random_signal(n, 40, seed);
        let g = random_filter(n, l, seed + 7, 1.0);
        let fast = apply_filter(&g, &y).unwrap();
        let slow = brute_filter(&g, &y);
        prop_assert_eq!(fast.len(), slow.len());
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!(close(*a, *b, 1e-12));
        }
    }

    #[test]
    fn modified_cost_never_exceeds_godard(seed in 0u64..10_000, freqs in prop::collection::vec(-0.5f64..0.5, 0..4)) {
        let r = random_seq(300, seed);
        let j = godard_cost(&r).unwrap();
        let jm = modified_cost(&r, &freqs).unwrap();
        prop_assert!(j >= 0.0);
        prop_assert!(jm <= j + 1e-12);
    }

    #[test]
    fn sinr_ignores_filter_scale(seed in 0u64..10_000, re in 0.1f64..3.0, ph in -3.1f64..3.1) {
        let contributions: Vec<MultichannelSignal> = (0..3).map(|k| random_signal(2, 80, seed * 5 + k)).collect();
        let noise = random_signal(2, 80, seed * 5 + 4);
        let g = random_filter(2, 3, seed + 11, 1.0);
        let a = sinr(&g, &contributions, &noise).unwrap();
        let b = sinr(&g.scaled(C64::from_polar(re, ph)), &contributions, &noise).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn cyclic_correlation_symmetries(seed in 0u64..10_000, alpha in -0.5f64..0.5, m in 0i64..20) {
        let x = random_seq(128, seed);
        // R^a(-m) = conj(R^-a(m)) exp(-2 i pi m a)
        let lhs = cyclic_corr(&x, alpha, -m).unwrap();
        let rhs = cyclic_corr(&x, -alpha, m).unwrap().conj() * rotation(-alpha, m);
        prop_assert!(close(lhs, rhs, 1e-12));
        // R_c^a(-m) = R_c^a(m) exp(-2 i pi m a)
        let lc = conj_cyclic_corr(&x, alpha, -m).unwrap();
        let rc = conj_cyclic_corr(&x, alpha, m).unwrap() * rotation(-alpha, m);
        prop_assert!(close(lc, rc, 1e-12));
    }

    #[test]
    fn wrapped_frequencies_stay_in_range(f in -50.0f64..50.0) {
        let w = wrap_freq(f);
        prop_assert!(w > -0.5 && w <= 0.5);
        prop_assert!(((f - w) - (f - w).round()).abs() < 1e-9);
        prop_assert!(freq_distance(f, w) < 1e-9);
    }

    #[test]
    fn matching_is_a_permutation(vals in prop::collection::vec(-30.0f64..40.0, 16), n in 1usize..5) {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vals[i * 4..i * 4 + n].to_vec()).collect();
        let mut p = match_streams(&rows).unwrap();
        p.sort_unstable();
        prop_assert_eq!(p, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn histogram_counts_every_finite_value(vals in prop::collection::vec(prop_oneof![-1e3f64..1e3, Just(f64::NAN), Just(f64::INFINITY)], 0..200)) {
        let h = histogram(&vals);
        let finite = vals.iter().filter(|v| v.is_finite()).count();
        prop_assert_eq!(h.iter().map(|b| b.2).sum::<usize>(), finite);
    }

    #[test]
    fn config_survives_toml(seed in any::<u64>(), trials in 1usize..500, k in 2usize..4, gamma in 0.0f64..0.3, identical in any::<bool>()) {
        let cfg = ExperimentConfig {
            seed,
            trials,
            k,
            gamma,
            scenario: if identical { Scenario::Identical } else { Scenario::Distinct },
            ..Default::default()
        };
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn least_squares_recovers_a_realizable_filter(seed in 0u64..10_000, n in 1usize..4, l in 0usize..4) {
        let y = random_signal(n, 400, seed);
        let g = random_filter(n, l, seed + 3, 1.0);
        let target = apply_filter(&g, &y).unwrap();
        let back = reinit_filter(&y, &target, l, l).unwrap();
        for (ra, rb) in g.taps.iter().zip(&back.taps) {
            for (a, b) in ra.iter().zip(rb) {
                prop_assert!((a - b).norm() < 1e-8);
            }
        }
    }
}
