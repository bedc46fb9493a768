#![allow(dead_code)]

use std::f64::consts::PI;

use cmasep::channel::MultichannelSignal;
use cmasep::costs::{
    c4_time_average, godard_cost, measure_terms, modified_cost, CostKind, ExpansionTerms, FilteredSource, SeparatorFilter,
};
use cmasep::cyclostats::{conj_cyclic_corr, cyclic_corr};
use cmasep::sigmodel::{
    gen_symbols, rotation, rrc_pulse, synth_source, synth_with_pulse, Modulation, SourceSpec, SymbolSequence,
};
use cmasep::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tiny deterministic index generator for picking taps.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn below(&mut self, n: usize) -> usize {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((self.0 >> 33) % n as u64) as usize
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_seq(n: usize, seed: u64) -> Vec<C64> {
    let mut r = rng(seed);
    (0..n).map(|_| C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))).collect()
}

pub fn random_signal(n_sensors: usize, len: usize, seed: u64) -> MultichannelSignal {
    let data = (0..n_sensors).map(|m| random_seq(len, seed.wrapping_mul(31).wrapping_add(m as u64))).collect();
    MultichannelSignal::new(data, 1.0).unwrap()
}

pub fn random_filter(n_sensors: usize, half_len: usize, seed: u64, scale: f64) -> SeparatorFilter {
    let mut r = rng(seed);
    let taps = (0..n_sensors)
        .map(|_| (0..2 * half_len + 1).map(|_| C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)) * scale).collect())
        .collect();
    SeparatorFilter::from_taps(taps).unwrap()
}

/// `r(i) = sum_m sum_l g_m(l) y_m(i + L - l)` by explicit loops.
pub fn brute_filter(g: &SeparatorFilter, y: &MultichannelSignal) -> Vec<C64> {
    let l = g.half_len as i64;
    let out = y.len() - 2 * g.half_len;
    (0..out)
        .map(|i| {
            let n = i as i64 + l;
            let mut acc = C64::new(0.0, 0.0);
            for m in 0..y.n_sensors() {
                for lag in -l..=l {
                    acc += g.tap(m, lag) * y.data[m][(n - lag) as usize];
                }
            }
            acc
        })
        .collect()
}

/// Per-source contributions of a scalar mixture with known composite pulses.
pub struct SyntheticMixture {
    pub len: usize,
    pub contributions: Vec<Vec<C64>>,
    pub terms: ExpansionTerms,
}

/// `k = 2`: two BPSK sources sharing rate and offset (strong cross terms);
/// `k = 3`: three BPSK sources with distinct rates and offsets. Each goes
/// through its own random 3-tap filter; the cumulant term comes from the
/// composite pulse rather than from the data.
pub fn synthetic_mixture(k: usize, len: usize, seed: u64) -> SyntheticMixture {
    let te = 1.0 / 1.6;
    let params: Vec<(f64, f64)> =
        if k == 2 { vec![(1.0, 0.02), (1.0, 0.02)] } else { vec![(1.0, 0.01), (1.1, -0.02), (1.25, 0.015)] };
    let mut r = rng(seed);
    let taps_n = 3usize;
    let origin = taps_n - 1;
    let mut contributions = Vec::new();
    let mut filtered = Vec::new();
    for (idx, &(t, df_hz)) in params.iter().enumerate() {
        let spec = SourceSpec::new(Modulation::Bpsk, t, 0.5, df_hz).unwrap();
        let pulse = rrc_pulse(t, 0.5).unwrap();
        let n_total = len + origin;
        let lo = -(pulse.span_symbols as i64) - 2;
        let n_sym = ((n_total as f64 * te / t) as i64 + 2 * pulse.span_symbols as i64 + 6) as usize;
        let symbols = gen_symbols(Modulation::Bpsk, n_sym, seed * 10 + idx as u64).unwrap().with_first_index(lo);
        let s = synth_source(&spec, &symbols, te, n_total, 0.0).unwrap();
        let df = s.delta_f;
        let scale = r.random_range(0.5..0.8);
        let f: Vec<C64> = (0..taps_n).map(|_| C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)) * scale).collect();
        let u: Vec<C64> = s.samples.iter().enumerate().map(|(n, z)| z * rotation(df, n as i64)).collect();
        let x: Vec<C64> = (0..len).map(|i| (0..taps_n).map(|l| f[l] * u[i + origin - l]).sum()).collect();
        let phi = |tt: f64| -> C64 {
            (0..taps_n).map(|l| f[l] * rotation(-df, l as i64) * pulse.eval_truncated(tt - l as f64 * te)).sum()
        };
        let c4_raw = c4_time_average(-2.0, phi, t, te, origin as f64 * te, len, pulse.support() + taps_n as f64 * te);
        let power = x.iter().map(|z| z.norm_sqr()).sum::<f64>() / len as f64;
        filtered.push(FilteredSource::from_contribution(
            &x,
            origin as i64,
            Modulation::Bpsk,
            s.alpha,
            df,
            Some(c4_raw / (power * power)),
        ));
        contributions.push(x);
    }
    let terms = measure_terms(&filtered).unwrap();
    SyntheticMixture { len, contributions, terms }
}

/// Standard error of the cost from `batches` equal batches.
pub fn batch_se(r: &[C64], kind: &CostKind, batches: usize) -> f64 {
    let size = r.len() / batches;
    let vals: Vec<f64> = r
        .chunks_exact(size)
        .map(|c| match kind {
            CostKind::Godard => godard_cost(c).unwrap(),
            CostKind::Modified(f) => modified_cost(c, f).unwrap(),
        })
        .collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

/// Extremes of `|R^(alpha)(0)|`, `|R_c^(0)(0)|` and of the pair bracket
/// `l' - 2` over random unit-norm filters applied to BPSK sources sharing a
/// rate and offset. Returns them with the statistical slack used.
pub fn correlation_bound_extremes(n_filters: usize, len: usize, seed: u64) -> (f64, f64, f64, f64) {
    let te = 1.0 / 1.6;
    let taps_n = 5usize;
    let origin = taps_n - 1;
    let spec = SourceSpec::new(Modulation::Bpsk, 1.0, 0.5, 0.03).unwrap();
    let pulse = rrc_pulse(1.0, 0.5).unwrap();
    let n_total = len + origin;
    let lo = -(pulse.span_symbols as i64) - 2;
    let n_sym = ((n_total as f64 * te) as i64 + 2 * pulse.span_symbols as i64 + 6) as usize;
    let sources: Vec<_> = (0..2)
        .map(|i| {
            let sym = gen_symbols(Modulation::Bpsk, n_sym, seed + i).unwrap().with_first_index(lo);
            synth_source(&spec, &sym, te, n_total, 0.0).unwrap()
        })
        .collect();
    let df = sources[0].delta_f;
    let alpha = sources[0].alpha;
    let offset: Vec<Vec<C64>> =
        sources.iter().map(|s| s.samples.iter().enumerate().map(|(n, z)| z * rotation(df, n as i64)).collect()).collect();
    let mut r = rng(seed + 100);
    let (mut worst_r, mut worst_rc, mut worst_b) = (0.0f64, 0.0f64, f64::INFINITY);
    for _ in 0..n_filters {
        let mut fs = Vec::new();
        for u in &offset {
            let f: Vec<C64> = (0..taps_n).map(|_| C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))).collect();
            let x: Vec<C64> = (0..len).map(|i| (0..taps_n).map(|l| f[l] * u[i + origin - l]).sum()).collect();
            let s = FilteredSource::from_contribution(&x, origin as i64, Modulation::Bpsk, alpha, df, None);
            worst_r = worst_r
                .max(cyclic_corr(&s.tilde, alpha, 0).unwrap().norm())
                .max(cyclic_corr(&s.tilde, -alpha, 0).unwrap().norm());
            worst_rc = worst_rc.max(conj_cyclic_corr(&s.tilde, 0.0, 0).unwrap().norm());
            fs.push(s);
        }
        let t = measure_terms(&fs).unwrap();
        worst_b = worst_b.min(t.l_prime[0][1] - 2.0);
    }
    (worst_r, worst_rc, worst_b, 4.0 / (len as f64).sqrt())
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Worst relative deviation between `[f(z) s](n)` computed on samples and
/// `r_a(n T_e)` computed from the spectrum `f(exp(2 i pi nu T_e)) g^(nu)` by
/// quadrature, for several oversampling ratios `T / T_e`.
pub fn discrete_continuous_worst(ratios: &[f64], gamma: f64) -> f64 {
    let t = 1.0;
    let n_active = 24i64;
    let span = 400usize;
    let pulse = rrc_pulse(t, gamma).unwrap().with_span(span);
    let spec = SourceSpec::new(Modulation::Bpsk, t, gamma, 0.0).unwrap();
    let active = gen_symbols(Modulation::Bpsk, n_active as usize, 3).unwrap().values;
    // Zero padding keeps every nonzero symbol inside the (long) span.
    let pad = span as i64 + 8;
    let mut values = vec![C64::new(0.0, 0.0); (2 * pad + n_active) as usize];
    values[pad as usize..(pad + n_active) as usize].copy_from_slice(&active);
    let symbols = SymbolSequence::new(Modulation::Bpsk, -pad, values);
    let f = [C64::new(0.8, -0.1), C64::new(-0.35, 0.4), C64::new(0.2, 0.05), C64::new(-0.1, -0.2)];

    let nodes = gauss_legendre(16);
    let w = (1.0 + gamma) / (2.0 * t);
    let breaks = [-w, -(1.0 - gamma) / (2.0 * t), (1.0 - gamma) / (2.0 * t), w];
    let mut worst: f64 = 0.0;
    for &ratio in ratios {
        let te = t / ratio;
        let n_samples = ((n_active as f64 + 4.0) * ratio) as usize;
        let t0 = -2.0 * t;
        let s = synth_with_pulse(&spec, &pulse, &symbols, te, n_samples + f.len(), t0 - (f.len() - 1) as f64 * te).unwrap();
        let discrete: Vec<C64> =
            (0..n_samples).map(|n| (0..f.len()).map(|l| f[l] * s.samples[n + f.len() - 1 - l]).sum()).collect();
        // Composite impulse response from its spectrum.
        let h = |tt: f64| -> C64 {
            let mut acc = C64::new(0.0, 0.0);
            for seg in breaks.windows(2) {
                let pieces = 48;
                let width = (seg[1] - seg[0]) / pieces as f64;
                for p in 0..pieces {
                    let a = seg[0] + p as f64 * width;
                    for &(x, wt) in &nodes {
                        let nu = a + 0.5 * width * (x + 1.0);
                        let fz: C64 = (0..f.len()).map(|l| f[l] * C64::from_polar(1.0, -2.0 * PI * nu * l as f64 * te)).sum();
                        acc += fz * pulse.spectrum(nu) * C64::from_polar(1.0, 2.0 * PI * nu * tt) * (0.5 * width * wt);
                    }
                }
            }
            acc
        };
        let continuous: Vec<C64> = (0..n_samples)
            .map(|n| {
                let tt = t0 + n as f64 * te;
                (0..n_active).map(|j| active[j as usize] * h(tt - j as f64 * t)).sum()
            })
            .collect();
        let scale = continuous.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (a, b) in discrete.iter().zip(&continuous) {
            worst = worst.max((a - b).norm() / scale);
        }
    }
    worst
}
