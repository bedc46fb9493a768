//! Sequential extraction: minimize a cost, remove the extracted source from
//! the observation, extract again, then refine each later source on the
//! original mixture from a least-squares initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::MultichannelSignal;
use crate::costs::{apply_filter, minimize, CostKind, MinimizeOptions, SeparatorFilter};
use crate::lsq;
use crate::{Error, Result, C64};

/// Output of one converged extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub filter: SeparatorFilter,
    /// `apply_filter(filter, y)`; sample `i` sits at time index `i + origin` of `y`.
    pub extracted: Vec<C64>,
    pub origin: usize,
    pub final_cost: f64,
    pub kind: CostKind,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeflationOptions {
    /// Separator half length `L`.
    pub half_len: usize,
    /// Half length of the subtraction filters; `None` means `2L`.
    pub sub_half_len: Option<usize>,
    /// Descents per extraction; the first starts from the given filter, the
    /// others from random filters. The lowest final cost wins.
    pub restarts: usize,
    pub seed: u64,
    /// Refine sources after the first on the original mixture.
    pub refine_on_original: bool,
    pub minimize: MinimizeOptions,
}

impl Default for DeflationOptions {
    fn default() -> Self {
        DeflationOptions {
            half_len: 8,
            sub_half_len: None,
            restarts: 1,
            seed: 0,
            refine_on_original: true,
            minimize: MinimizeOptions::default(),
        }
    }
}

impl DeflationOptions {
    pub fn sub_len(&self) -> usize {
        self.sub_half_len.unwrap_or(2 * self.half_len)
    }
}

fn random_filter(n_sensors: usize, half_len: usize, scale: f64, rng: &mut ChaCha8Rng) -> SeparatorFilter {
    let mut g = SeparatorFilter::zeros(n_sensors, half_len);
    for row in g.taps.iter_mut() {
        for t in row.iter_mut() {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            *t = C64::new(re, im) * scale;
        }
    }
    g
}

/// Minimizes `kind` from `g0` (plus `opts.restarts - 1` random starts).
pub fn extract(
    y: &MultichannelSignal,
    kind: &CostKind,
    g0: &SeparatorFilter,
    opts: &DeflationOptions,
) -> Result<ExtractionRecord> {
    if g0.half_len != opts.half_len {
        return Err(Error::Config("initial filter length differs from the configured half length".into()));
    }
    let mut best = minimize(g0, y, kind, &opts.minimize)?;
    if opts.restarts > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        // Random starts with roughly unit output power.
        let taps = (y.n_sensors() * (2 * opts.half_len + 1)) as f64;
        let scale = (y.energy() / y.len() as f64 * taps / y.n_sensors() as f64).sqrt().recip();
        for _ in 1..opts.restarts {
            let g = random_filter(y.n_sensors(), opts.half_len, scale, &mut rng);
            let run = minimize(&g, y, kind, &opts.minimize)?;
            if run.final_cost() < best.final_cost() {
                best = run;
            }
        }
    }
    let extracted = apply_filter(&best.filter, y)?;
    Ok(ExtractionRecord {
        final_cost: best.final_cost(),
        filter: best.filter,
        extracted,
        origin: opts.half_len,
        kind: kind.clone(),
        iterations: best.iterations,
        converged: best.converged,
    })
}

/// `r` placed on the time axis of a length-`len` record, delayed by `lag`.
fn shifted(r: &[C64], origin: usize, lag: i64, len: usize) -> Vec<C64> {
    let mut col = vec![C64::new(0.0, 0.0); len];
    for (i, &v) in r.iter().enumerate() {
        let n = i as i64 + origin as i64 + lag;
        if n >= 0 && (n as usize) < len {
            col[n as usize] = v;
        }
    }
    col
}

/// Removes from every sensor its least-squares fit by non-causal FIR filters
/// (`-L_sub..=L_sub`) of the given sequences. Sequence `j` starts at time
/// index `origins[j]` of `y` and is taken as zero outside its support.
pub fn subtract_contributions(
    y: &MultichannelSignal,
    sequences: &[&[C64]],
    origins: &[usize],
    sub_half_len: usize,
) -> Result<MultichannelSignal> {
    if sequences.len() != origins.len() {
        return Err(Error::Config("one origin per sequence is required".into()));
    }
    if sequences.is_empty() {
        return Ok(y.clone());
    }
    let len = y.len();
    let lags = sub_half_len as i64;
    let mut columns: Vec<Vec<C64>> = Vec::new();
    for (r, &o) in sequences.iter().zip(origins) {
        if r.is_empty() || o + r.len() > len {
            return Err(Error::Domain("sequence does not fit inside the record".into()));
        }
        for lag in -lags..=lags {
            columns.push(shifted(r, o, lag, len));
        }
    }
    let cols: Vec<&[C64]> = columns.iter().map(|c| c.as_slice()).collect();
    let targets: Vec<&[C64]> = y.data.iter().map(|row| row.as_slice()).collect();
    let fits = lsq::fit_many(&cols, &targets);
    let mut out = y.clone();
    for (row, fit) in out.data.iter_mut().zip(&fits) {
        for (col, &c) in cols.iter().zip(&fit.coeffs) {
            for (v, &x) in row.iter_mut().zip(col.iter()) {
                *v -= c * x;
            }
        }
    }
    Ok(out)
}

/// Single-sequence form of [`subtract_contributions`].
pub fn subtract_contribution(
    y: &MultichannelSignal,
    r: &[C64],
    origin: usize,
    sub_half_len: usize,
) -> Result<MultichannelSignal> {
    subtract_contributions(y, &[r], &[origin], sub_half_len)
}

/// Least-squares filter of half length `L` mapping `y` onto `target`, where
/// `target[i]` sits at time index `i + origin` of `y`. Only output samples
/// where `target` is defined enter the criterion.
pub fn reinit_filter(y: &MultichannelSignal, target: &[C64], origin: usize, half_len: usize) -> Result<SeparatorFilter> {
    let l = half_len;
    let m = y.len();
    if m <= 2 * l {
        return Err(Error::Domain(format!("record length {m} must exceed 2L = {}", 2 * l)));
    }
    // Output i of the filter sits at time i + L.
    let lo = origin.max(l);
    let hi = (origin + target.len()).min(m - l);
    if hi <= lo {
        return Err(Error::Domain("target does not overlap the filter output".into()));
    }
    let rows = hi - lo;
    let mut columns = Vec::with_capacity(y.n_sensors() * (2 * l + 1));
    for row in &y.data {
        for k in 0..=2 * l {
            // tap k (lag k - L) reads y(n + L - k) for output time n
            let start = lo + l - k;
            columns.push(&row[start..start + rows]);
        }
    }
    let t = &target[lo - origin..hi - origin];
    let sol = lsq::fit(&columns, t);
    let taps = sol.coeffs.chunks(2 * l + 1).map(|c| c.to_vec()).collect();
    SeparatorFilter::from_taps(taps)
}

/// Extracts `k` sources. The first comes from the mixture; every later one
/// is extracted from the mixture with all previous outputs removed, mapped
/// back to the original mixture by [`reinit_filter`] and refined there.
pub fn separate_all(y: &MultichannelSignal, k: usize, kind: &CostKind, opts: &DeflationOptions) -> Result<Vec<ExtractionRecord>> {
    if k == 0 {
        return Err(Error::Config("at least one source must be extracted".into()));
    }
    let l = opts.half_len;
    let mut records: Vec<ExtractionRecord> = Vec::with_capacity(k);
    let first = extract(y, kind, &SeparatorFilter::default_init(y, l), opts)?;
    records.push(first);
    for j in 1..k {
        let seqs: Vec<&[C64]> = records.iter().map(|r| r.extracted.as_slice()).collect();
        let origins: Vec<usize> = records.iter().map(|r| r.origin).collect();
        let deflated = subtract_contributions(y, &seqs, &origins, opts.sub_len())?;
        let stage_opts = DeflationOptions { seed: opts.seed.wrapping_add(j as u64), ..*opts };
        let coarse = extract(&deflated, kind, &SeparatorFilter::default_init(&deflated, l), &stage_opts)?;
        if !opts.refine_on_original {
            records.push(coarse);
            continue;
        }
        let mut g_init = reinit_filter(y, &coarse.extracted, coarse.origin, l)?;
        if g_init.is_zero() {
            g_init = coarse.filter.clone();
        }
        let refined = extract(y, kind, &g_init, &DeflationOptions { restarts: 1, ..stage_opts })?;
        records.push(refined);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn noise(n: usize, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()
    }

    #[test]
    fn exact_model_is_removed() {
        let r = noise(600, 1);
        let taps = [C64::new(0.5, 0.1), C64::new(-1.0, 0.3), C64::new(0.2, 0.0)];
        let origin = 10;
        let len = 630;
        let data: Vec<Vec<C64>> = (0..2)
            .map(|m| {
                let mut row = vec![C64::new(0.0, 0.0); len];
                for (d, &c) in taps.iter().enumerate() {
                    let col = shifted(&r, origin, d as i64 - 1 + m, len);
                    row.iter_mut().zip(col).for_each(|(a, b)| *a += c * b);
                }
                row
            })
            .collect();
        let y = MultichannelSignal::new(data, 1.0).unwrap();
        let res = subtract_contribution(&y, &r, origin, 3).unwrap();
        assert!(res.energy() < 1e-6 * y.energy());
    }

    #[test]
    fn realizable_target_is_recovered() {
        let y = MultichannelSignal::new(vec![noise(400, 2), noise(400, 3)], 1.0).unwrap();
        let mut g = SeparatorFilter::zeros(2, 3);
        g.taps[0][1] = C64::new(1.0, -0.5);
        g.taps[1][5] = C64::new(0.3, 0.2);
        let target = apply_filter(&g, &y).unwrap();
        let got = reinit_filter(&y, &target, 3, 3).unwrap();
        let back = apply_filter(&got, &y).unwrap();
        let err: f64 = back.iter().zip(&target).map(|(a, b)| (a - b).norm_sqr()).sum();
        let e: f64 = target.iter().map(|z| z.norm_sqr()).sum();
        assert!(err < 1e-12 * e);
    }

    #[test]
    fn single_source_is_extract() {
        let y = MultichannelSignal::new(vec![noise(300, 4).iter().map(|z| z * 3.0).collect()], 1.0).unwrap();
        let opts = DeflationOptions { half_len: 2, ..Default::default() };
        let a = separate_all(&y, 1, &CostKind::Godard, &opts).unwrap();
        let b = extract(&y, &CostKind::Godard, &SeparatorFilter::default_init(&y, 2), &opts).unwrap();
        assert_eq!(a, vec![b]);
        assert!(separate_all(&y, 0, &CostKind::Godard, &opts).is_err());
    }
}
