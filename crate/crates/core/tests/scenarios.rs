mod common;

use cmasep::channel::{draw_channel, mix, symbol_range, ArrayGeometry, ChannelRealization, MultipathProfile};
use cmasep::costs::{apply_filter, measure_terms, minimize, CostKind, FilteredSource, MinimizeOptions, SeparatorFilter};
use cmasep::cyclostats::{detect_sig_freqs, freq_distance, true_freq_sets, DetectOptions};
use cmasep::eval::{mmse_wiener, ser};
use cmasep::experiment::{run_trial, ExperimentConfig, Method, Scenario};
use cmasep::sigmodel::{gen_symbols, rrc_pulse, Modulation, SourceSpec, SymbolSequence};
use cmasep::variational::{evaluate, minimize_objective, BandlimitedFunction, Objective, VariationalOptions};
use cmasep::C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TE: f64 = 1.0 / 1.6;

fn mixture(
    specs: &[SourceSpec],
    n_sensors: usize,
    n_samples: usize,
    es_n0_db: f64,
    seed: u64,
) -> (cmasep::channel::MixedSignal, Vec<SymbolSequence>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let profile = MultipathProfile::builtin("TU").unwrap();
    let geom = ArrayGeometry::circular(n_sensors, 1e9).unwrap();
    // Profile delays are in seconds for microsecond symbols; rescale them
    // to the unit symbol period used here (about one symbol of spread).
    let channels: Vec<ChannelRealization> = specs
        .iter()
        .map(|_| {
            let mut c = draw_channel(&profile, &geom, &mut rng);
            c.paths.iter_mut().for_each(|p| p.delay *= 0.2e6);
            c
        })
        .collect();
    let pairs: Vec<_> = specs
        .iter()
        .zip(&channels)
        .enumerate()
        .map(|(k, (s, c))| {
            let (lo, hi) = symbol_range(s, TE, n_samples, c.max_delay()).unwrap();
            let sym = gen_symbols(s.kind, (hi - lo) as usize, seed * 17 + k as u64).unwrap().with_first_index(lo);
            (*s, sym)
        })
        .collect();
    let symbols = pairs.iter().map(|p| p.1.clone()).collect();
    (mix(&pairs, &channels, TE, n_samples, es_n0_db, &mut rng).unwrap(), symbols)
}

#[test]
fn circular_sources_show_no_noncircular_frequencies() {
    let specs = [
        SourceSpec::new(Modulation::CircularQpsk, 1.0, 0.5, 0.03).unwrap(),
        SourceSpec::new(Modulation::CircularQpsk, 1.1, 0.5, -0.05).unwrap(),
    ];
    assert!(true_freq_sets(&specs, TE).i_cs.is_empty());
    let (m, _) = mixture(&specs, 4, 8000, 20.0, 1);
    let o = DetectOptions::default();
    let found = detect_sig_freqs(&m.mixture, &o.lags, 1.0 / 8000.0, o.threshold_factor).unwrap();
    assert!(found.is_empty(), "{found:?}");
}

#[test]
fn bpsk_frequencies_are_detected() {
    let specs = [SourceSpec::new(Modulation::Bpsk, 1.0, 0.5, 0.04).unwrap()];
    let sets = true_freq_sets(&specs, TE);
    assert_eq!(sets.i_cs.len(), 1);
    let (m, _) = mixture(&specs, 4, 16000, 20.0, 2);
    let o = DetectOptions::default();
    let found = detect_sig_freqs(&m.mixture, &o.lags, 1.0 / 16000.0, o.threshold_factor).unwrap();
    let tol = 2.0 / 16000.0;
    assert!(found.iter().any(|d| freq_distance(d.freq, sets.i_cs[0]) < tol), "missed {}: {found:?}", sets.i_cs[0]);
    for d in &found {
        assert!(sets.contains_c(d.freq, tol), "false alarm {d:?}");
    }
}

#[test]
fn measured_fourth_moment_matches_the_continuous_functional() {
    let gamma = 0.5;
    let spec = SourceSpec::new(Modulation::Bpsk, 1.0, gamma, 0.0).unwrap();
    let pulse = rrc_pulse(1.0, gamma).unwrap();
    let n = 200_000;
    let lo = -(pulse.span_symbols as i64) - 2;
    let n_sym = (n as f64 * TE) as usize + 2 * pulse.span_symbols + 6;
    let sym = gen_symbols(Modulation::Bpsk, n_sym, 5).unwrap().with_first_index(lo);
    let s = cmasep::sigmodel::synth_source(&spec, &sym, TE, n, 0.0).unwrap();
    let src = FilteredSource::from_contribution(&s.samples, 0, Modulation::Bpsk, s.alpha, 0.0, None);
    let terms = measure_terms(&[src]).unwrap();

    let cells = 200;
    let grid = BandlimitedFunction::brick_wall(gamma, cells).unwrap();
    let values = grid.freqs().iter().map(|&nu| C64::new(pulse.spectrum(nu), 0.0)).collect();
    let f = BandlimitedFunction::new(gamma, cells, values).unwrap();
    let phi = evaluate(&f, -2.0, Objective::Phi).unwrap();
    let phi_prime = evaluate(&f, -2.0, Objective::PhiPrime).unwrap();
    assert!((terms.beta_moment[0] - phi).abs() < 0.01, "{} vs {phi}", terms.beta_moment[0]);
    assert!((terms.beta_prime[0] - phi_prime).abs() < 0.01, "{} vs {phi_prime}", terms.beta_prime[0]);
}

#[test]
fn clean_bpsk_extraction_reaches_the_variational_floor() {
    let gamma = 0.5;
    let specs = [SourceSpec::new(Modulation::Bpsk, 1.0, gamma, 0.02).unwrap()];
    let (m, _) = mixture(&specs, 5, 6400, f64::INFINITY, 3);
    let g0 = SeparatorFilter::default_init(&m.mixture, 8);
    let res = minimize(&g0, &m.mixture, &CostKind::Godard, &MinimizeOptions::default()).unwrap();
    let beta_min =
        minimize_objective(Objective::Phi, gamma, -2.0, &VariationalOptions { cells_per_unit: 64, ..Default::default() })
            .unwrap()
            .value;
    let floor = 1.0 - 1.0 / beta_min;
    let j = res.final_cost();
    assert!((j - floor).abs() < 0.03, "J = {j}, floor = {floor}");
}

#[test]
fn noiseless_wiener_filters_are_near_perfect() {
    let specs =
        [SourceSpec::new(Modulation::Bpsk, 1.0, 0.5, 0.02).unwrap(), SourceSpec::new(Modulation::Bpsk, 1.0, 0.5, 0.02).unwrap()];
    let (m, _) = mixture(&specs, 5, 4000, f64::INFINITY, 4);
    for k in 0..2 {
        let (_, s) = mmse_wiener(&m, k, 8).unwrap();
        assert!(s > 40.0, "source {k}: {s} dB");
    }
}

#[test]
fn symbol_errors_ignore_the_phase_ambiguity() {
    for (kind, seed) in [(Modulation::Bpsk, 6), (Modulation::CircularQpsk, 7)] {
        let spec = SourceSpec::new(kind, 1.0, 0.5, 0.03).unwrap();
        let (m, symbols) = mixture(&[spec], 4, 3200, 25.0, seed);
        let (g, _) = mmse_wiener(&m, 0, 8).unwrap();
        let r = apply_filter(&g, &m.mixture).unwrap();
        let base = ser(&r, 8, &spec, TE, &symbols[0]).unwrap();
        assert!(base < 0.01, "{kind:?}: {base}");
        for c in [C64::new(-1.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0)] {
            let rot: Vec<C64> = r.iter().map(|z| z * c).collect();
            assert_eq!(ser(&rot, 8, &spec, TE, &symbols[0]).unwrap(), base, "{kind:?} x {c}");
        }
    }
}

#[test]
fn identical_sources_separate_with_the_modified_cost() {
    let cfg = ExperimentConfig {
        scenario: Scenario::Identical,
        k: 2,
        t_obs_symbols: 1000,
        t_perf_symbols: 1500,
        trials: 1,
        seed: 11,
        methods: vec![Method::Jmod, Method::Wiener],
        compute_ser: false,
        ..Default::default()
    };
    let res = run_trial(&cfg, 0).unwrap();
    for (method, score) in &res.methods {
        let mut srcs: Vec<usize> = score.streams.iter().map(|s| s.source).collect();
        srcs.sort_unstable();
        assert_eq!(srcs, vec![0, 1]);
        for s in &score.streams {
            assert!(s.matched_sinr_db() > 10.0, "{method:?}: {:?}", s.sinr_db);
        }
    }
}
