//! Scoring of separators: output SINR from the known per-source
//! contributions, the non-blind Wiener baseline, and symbol error rates
//! through a blind fractionally spaced CMA equalizer.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::channel::{MixedSignal, MultichannelSignal};
use crate::costs::{apply_filter, minimize, CostKind, MinimizeOptions, SeparatorFilter};
use crate::deflation::reinit_filter;
use crate::sigmodel::{rotation, Modulation, SourceSpec, SymbolSequence};
use crate::{Error, Result, C64};

fn mean_power(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>() / x.len().max(1) as f64
}

fn to_db(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num > 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        }
    } else if num == 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * (num / den).log10()
    }
}

/// Output power of each contribution and of the noise through `g`.
pub fn output_powers(
    g: &SeparatorFilter,
    contributions: &[MultichannelSignal],
    noise: &MultichannelSignal,
) -> Result<(Vec<f64>, f64)> {
    let p = contributions.iter().map(|c| apply_filter(g, c).map(|r| mean_power(&r))).collect::<Result<Vec<_>>>()?;
    let pn = mean_power(&apply_filter(g, noise)?);
    Ok((p, pn))
}

/// Per-source SINR in dB at the output of `g`. A vanishing denominator
/// yields `+inf`.
pub fn sinr(g: &SeparatorFilter, contributions: &[MultichannelSignal], noise: &MultichannelSignal) -> Result<Vec<f64>> {
    if contributions.is_empty() {
        return Err(Error::EmptyInput("sinr needs at least one contribution"));
    }
    let (p, pn) = output_powers(g, contributions, noise)?;
    let total: f64 = p.iter().sum();
    Ok(p.iter().map(|&pk| to_db(pk, total - pk + pn)).collect())
}

/// Least-squares (Wiener) filter of half length `L` reproducing `target`,
/// with `target[n]` aligned with `y(n)`.
pub fn wiener_filter(y: &MultichannelSignal, target: &[C64], half_len: usize) -> Result<SeparatorFilter> {
    if target.len() != y.len() {
        return Err(Error::Domain("Wiener target must have one sample per observation sample".into()));
    }
    reinit_filter(y, target, 0, half_len)
}

/// Wiener filter for source `k` of a mixture and its SINR for that source.
pub fn mmse_wiener(mixed: &MixedSignal, k: usize, half_len: usize) -> Result<(SeparatorFilter, f64)> {
    let target = mixed.sources.get(k).ok_or_else(|| Error::Config(format!("no source {k}")))?;
    let g = wiener_filter(&mixed.mixture, target, half_len)?;
    let s = sinr(&g, &mixed.contributions, &mixed.noise)?;
    Ok((g, s[k]))
}

/// One-to-one assignment of streams (rows) to sources (columns) that
/// maximizes the summed SINR. Returns the source index of every stream.
pub fn match_streams(sinr_db: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n_src = sinr_db.first().map_or(0, Vec::len);
    if sinr_db.iter().any(|r| r.len() != n_src) {
        return Err(Error::Domain("SINR matrix rows differ in length".into()));
    }
    if sinr_db.len() > n_src {
        return Err(Error::Domain("more streams than sources".into()));
    }
    if n_src > 10 {
        return Err(Error::Domain("exhaustive matching is limited to 10 sources".into()));
    }
    fn clamp(v: f64) -> f64 {
        if v.is_nan() {
            -400.0
        } else {
            v.clamp(-400.0, 400.0)
        }
    }
    fn search(rows: &[Vec<f64>], used: &mut Vec<bool>, cur: &mut Vec<usize>, best: &mut (f64, Vec<usize>), acc: f64) {
        let i = cur.len();
        if i == rows.len() {
            if acc > best.0 {
                *best = (acc, cur.clone());
            }
            return;
        }
        for k in 0..used.len() {
            if !used[k] {
                used[k] = true;
                cur.push(k);
                search(rows, used, cur, best, acc + clamp(rows[i][k]));
                cur.pop();
                used[k] = false;
            }
        }
    }
    let mut best = (f64::NEG_INFINITY, Vec::new());
    search(sinr_db, &mut vec![false; n_src], &mut Vec::new(), &mut best, 0.0);
    Ok(best.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SerOptions {
    /// Equalizer half length per polyphase branch (symbol-spaced taps).
    pub half_len: usize,
    pub max_iter: usize,
    /// Delay search range in symbols.
    pub max_delay: i64,
    /// Half width (input samples) of the windowed-sinc resampler.
    pub interp_half_width: usize,
    pub min_symbols: usize,
}

impl Default for SerOptions {
    fn default() -> Self {
        SerOptions { half_len: 8, max_iter: 2000, max_delay: 32, interp_half_width: 32, min_symbols: 500 }
    }
}

/// `x(t)` at fractional sample position `u`, Hann-windowed sinc.
fn interpolate(x: &[C64], u: f64, half_width: usize) -> C64 {
    let base = u.floor() as i64;
    let hw = half_width as i64;
    let mut acc = C64::new(0.0, 0.0);
    for n in (base - hw + 1)..=(base + hw) {
        if n < 0 || n as usize >= x.len() {
            continue;
        }
        let d = u - n as f64;
        let s = if d.abs() < 1e-12 { 1.0 } else { (PI * d).sin() / (PI * d) };
        let w = 0.5 * (1.0 + (PI * d / half_width as f64).cos());
        acc += x[n as usize] * (s * w);
    }
    acc
}

/// Symbol error rate of a separated stream. `r[i]` is sample `origin + i`
/// of the observation. The stream is derotated by the known offset,
/// resampled at `T/2`, equalized by a two-branch CMA filter, phase
/// corrected, and compared with the true symbols over all delays in
/// `[-D, D]` and the rotations left ambiguous by the blind phase estimate
/// (`{1, -1}` for BPSK, `{1, i, -1, -i}` for QPSK); the best match is returned.
pub fn ser(r: &[C64], origin: i64, spec: &SourceSpec, sample_period: f64, symbols: &SymbolSequence) -> Result<f64> {
    ser_with(r, origin, spec, sample_period, symbols, &SerOptions::default())
}

pub fn ser_with(
    r: &[C64],
    origin: i64,
    spec: &SourceSpec,
    sample_period: f64,
    symbols: &SymbolSequence,
    opts: &SerOptions,
) -> Result<f64> {
    let t = spec.symbol_period;
    let te = sample_period;
    let n_sym = (r.len() as f64 * te / t).floor() as usize;
    if n_sym < opts.min_symbols {
        return Err(Error::Domain(format!("{n_sym} symbols are too few for the equalizer (need {})", opts.min_symbols)));
    }
    let df = spec.delta_f(te);
    let mut x: Vec<C64> = r.iter().enumerate().map(|(i, &v)| v * rotation(-df, origin + i as i64)).collect();
    let p = mean_power(&x);
    if !(p > 0.0) || !p.is_finite() {
        return Ok(1.0);
    }
    let s = p.sqrt().recip();
    x.iter_mut().for_each(|z| *z *= s);

    // T/2 grid inside the reliably interpolated part of the record.
    let hw = opts.interp_half_width as f64;
    let t_lo = (origin as f64 + hw) * te;
    let t_hi = (origin as f64 + r.len() as f64 - 1.0 - hw) * te;
    let j_first = (t_lo / t).ceil() as i64;
    let j_last = ((t_hi - 0.5 * t) / t).floor() as i64;
    if j_last - j_first < 2 * opts.half_len as i64 + 2 {
        return Err(Error::Domain("record too short after resampling".into()));
    }
    let phase = |j: i64, half: f64| interpolate(&x, (j as f64 + half) * t / te - origin as f64, opts.interp_half_width);
    let even: Vec<C64> = (j_first..=j_last).map(|j| phase(j, 0.0)).collect();
    let odd: Vec<C64> = (j_first..=j_last).map(|j| phase(j, 0.5)).collect();
    let y2 = MultichannelSignal::new(vec![even, odd], t)?;

    let g0 = SeparatorFilter::center_spike(2, opts.half_len, 0);
    let mopts = MinimizeOptions { max_iter: opts.max_iter, ..Default::default() };
    let eq = minimize(&g0, &y2, &CostKind::Godard, &mopts)?;
    let mut z = apply_filter(&eq.filter, &y2)?;

    // Blind phase estimate; the remaining ambiguity is a multiple of pi
    // (BPSK) or pi/2 (QPSK).
    let (power, kind) = match spec.kind {
        Modulation::Bpsk => (2, spec.kind),
        Modulation::CircularQpsk => (4, spec.kind),
    };
    let moment: C64 = z.iter().map(|v| v.powi(power)).sum();
    let theta = if power == 2 { moment.arg() / 2.0 } else { (-moment).arg() / 4.0 };
    let derot = C64::from_polar(1.0, -theta);
    z.iter_mut().for_each(|v| *v *= derot);

    let first_sym = j_first + opts.half_len as i64;
    let all = [C64::new(1.0, 0.0), C64::new(-1.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0)];
    let rotations = if power == 2 { &all[..2] } else { &all[..] };
    let mut best = f64::INFINITY;
    for d in -opts.max_delay..=opts.max_delay {
        for &rot in rotations {
            let mut errors = 0usize;
            let mut count = 0usize;
            for (i, &v) in z.iter().enumerate() {
                let j = first_sym + i as i64 + d;
                if j < symbols.first_index || j >= symbols.end_index() {
                    continue;
                }
                count += 1;
                if kind.decide(v * rot) != symbols.get(j) {
                    errors += 1;
                }
            }
            if 2 * count >= z.len() && count > 0 {
                best = best.min(errors as f64 / count as f64);
            }
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::Coverage("true symbols do not overlap the equalized stream".into()))
    }
}

/// Scores of one extracted stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamScore {
    /// SINR for every true source.
    pub sinr_db: Vec<f64>,
    /// Source assigned by the max-SINR matching.
    pub source: usize,
    pub ser: Option<f64>,
    /// NaN for non-blind baselines.
    pub final_cost: f64,
    /// Descent iterations of the final extraction (0 for baselines).
    pub iterations: usize,
    pub filter: SeparatorFilter,
}

impl StreamScore {
    pub fn matched_sinr_db(&self) -> f64 {
        self.sinr_db[self.source]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialScore {
    pub streams: Vec<StreamScore>,
    pub wiener_sinr_db: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigmodel::gen_symbols;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
        (0..n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()
    }

    #[test]
    fn sinr_sentinel_and_unit_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = noise(200, &mut rng);
        let z = vec![C64::new(0.0, 0.0); 200];
        let c1 = MultichannelSignal::new(vec![a.clone(), z.clone()], 1.0).unwrap();
        let c2 = MultichannelSignal::new(vec![z.clone(), a.clone()], 1.0).unwrap();
        let nz = MultichannelSignal::zeros(2, 200, 1.0);
        let g = SeparatorFilter::center_spike(2, 1, 0);
        let s = sinr(&g, &[c1.clone(), c2.clone()], &nz).unwrap();
        assert_eq!(s[0], f64::INFINITY);
        let mut both = SeparatorFilter::center_spike(2, 1, 0);
        both.taps[1][1] = C64::new(1.0, 0.0);
        let s = sinr(&both, &[c1, c2], &nz).unwrap();
        assert!(s[0].abs() < 1e-12 && s[1].abs() < 1e-12);
    }

    #[test]
    fn matching_is_one_to_one() {
        let m = vec![vec![20.0, 21.0], vec![0.0, 20.5]];
        assert_eq!(match_streams(&m).unwrap(), vec![0, 1]);
        let m = vec![vec![f64::INFINITY, 3.0]];
        assert_eq!(match_streams(&m).unwrap(), vec![0]);
    }

    #[test]
    fn ser_of_clean_and_random_streams() {
        let spec = SourceSpec::new(Modulation::Bpsk, 1.0, 0.5, 0.0).unwrap();
        let sym = gen_symbols(Modulation::Bpsk, 1200, 9).unwrap();
        let r: Vec<C64> = sym.values.iter().map(|v| v * C64::new(0.0, 2.0)).collect();
        let e = ser(&r, 0, &spec, 1.0, &sym).unwrap();
        assert_eq!(e, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = noise(1200, &mut rng);
        let e = ser(&n, 0, &spec, 1.0, &sym).unwrap();
        assert!((0.4..=0.55).contains(&e), "{e}");
        assert!(ser(&r[..300], 0, &spec, 1.0, &sym).is_err());
    }
}
