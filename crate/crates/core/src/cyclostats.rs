//! Cyclic and non-conjugate cyclic correlation estimators, ground-truth
//! cyclic frequency sets, and periodogram detection of the significant
//! non-conjugate frequencies.

use rustfft::FftPlanner;

use crate::channel::MultichannelSignal;
use crate::sigmodel::{rotation, Modulation, SourceSpec};
use crate::{Error, Result, C64};

/// Absolute tolerance for merging frequencies, cycles/sample.
pub const FREQ_TOL: f64 = 1e-9;

fn lag_range(len: usize, m: i64) -> Result<(usize, usize)> {
    if m.unsigned_abs() as usize >= len {
        return Err(Error::Domain(format!("lag {m} must be smaller than the sequence length {len}")));
    }
    let start = if m < 0 { (-m) as usize } else { 0 };
    let end = if m > 0 { len - m as usize } else { len };
    Ok((start, end))
}

/// `(1/M') sum_n x(n+m) x(n)^* exp(-2 i pi n alpha)` over the valid `n`.
pub fn cyclic_corr(x: &[C64], alpha: f64, m: i64) -> Result<C64> {
    let (start, end) = lag_range(x.len(), m)?;
    let mut acc = C64::new(0.0, 0.0);
    for n in start..end {
        let k = (n as i64 + m) as usize;
        acc += x[k] * x[n].conj() * rotation(-alpha, n as i64);
    }
    Ok(acc / (end - start) as f64)
}

/// `(1/M') sum_n x(n+m) x(n) exp(-2 i pi n alpha)` over the valid `n`.
pub fn conj_cyclic_corr(x: &[C64], alpha_c: f64, m: i64) -> Result<C64> {
    let (start, end) = lag_range(x.len(), m)?;
    let mut acc = C64::new(0.0, 0.0);
    for n in start..end {
        let k = (n as i64 + m) as usize;
        acc += x[k] * x[n] * rotation(-alpha_c, n as i64);
    }
    Ok(acc / (end - start) as f64)
}

/// Reduces a frequency to `(-1/2, 1/2]`.
pub fn wrap_freq(f: f64) -> f64 {
    let w = f - (f - 0.5).ceil();
    if w <= -0.5 {
        w + 1.0
    } else {
        w
    }
}

/// Circular distance between two normalized frequencies.
pub fn freq_distance(a: f64, b: f64) -> f64 {
    wrap_freq(a - b).abs()
}

fn merged(freqs: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for f in freqs.into_iter().map(wrap_freq) {
        if !out.iter().any(|&g| freq_distance(f, g) < FREQ_TOL) {
            out.push(f);
        }
    }
    out.sort_by(|a, b| a.total_cmp(b));
    out
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CyclicFrequencySets {
    /// Conjugate cyclic frequencies `{0, +-alpha_k}`.
    pub i: Vec<f64>,
    /// `I` without zero.
    pub i_star: Vec<f64>,
    /// Non-conjugate cyclic frequencies `{2 df_k, 2 df_k +- alpha_k : BPSK}`.
    pub i_c: Vec<f64>,
    /// Significant subset `{2 df_k : BPSK}`.
    pub i_cs: Vec<f64>,
}

impl CyclicFrequencySets {
    pub fn contains_c(&self, f: f64, tol: f64) -> bool {
        self.i_c.iter().any(|&g| freq_distance(f, g) <= tol)
    }
}

pub fn true_freq_sets(specs: &[SourceSpec], sample_period: f64) -> CyclicFrequencySets {
    let items: Vec<_> = specs.iter().map(|s| (s.kind, s.alpha(sample_period), s.delta_f(sample_period))).collect();
    freq_sets(&items)
}

/// Sets from `(modulation, alpha_k, df_k)` triples in cycles/sample.
pub fn freq_sets(sources: &[(Modulation, f64, f64)]) -> CyclicFrequencySets {
    let mut i = vec![0.0];
    let mut i_c = Vec::new();
    let mut i_cs = Vec::new();
    for &(kind, a, df) in sources {
        i.push(a);
        i.push(-a);
        if kind == Modulation::Bpsk {
            let c = 2.0 * df;
            i_c.extend([c, c + a, c - a]);
            i_cs.push(c);
        }
    }
    let i = merged(i);
    let i_star = i.iter().copied().filter(|f| f.abs() >= FREQ_TOL).collect();
    CyclicFrequencySets { i, i_star, i_c: merged(i_c), i_cs: merged(i_cs) }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectedFrequency {
    /// Cycles/sample in `(-1/2, 1/2]`.
    pub freq: f64,
    /// Averaged periodogram magnitude at the peak.
    pub statistic: f64,
    /// Statistic divided by the median level.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectOptions {
    pub lags: Vec<usize>,
    pub grid_step: Option<f64>,
    pub threshold_factor: f64,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions { lags: vec![0, 1, 2, 3], grid_step: None, threshold_factor: 8.0 }
    }
}

/// Peaks of the periodogram of `y_m(n+tau) y_m(n)`, magnitude-averaged over
/// sensors and lags, that exceed `threshold_factor` times the median level.
pub fn detect_sig_freqs(
    y: &MultichannelSignal,
    lags: &[usize],
    grid_step: f64,
    threshold_factor: f64,
) -> Result<Vec<DetectedFrequency>> {
    let m = y.len();
    if y.is_empty() || y.n_sensors() == 0 {
        return Err(Error::Domain("cannot detect frequencies on an empty signal".into()));
    }
    if lags.is_empty() {
        return Err(Error::Config("detection needs at least one lag".into()));
    }
    let max_lag = *lags.iter().max().expect("non-empty");
    if max_lag >= m {
        return Err(Error::Domain(format!("lag {max_lag} exceeds the record length {m}")));
    }
    if !(grid_step > 0.0) || grid_step < 1.0 / m as f64 - 1e-15 {
        return Err(Error::Domain(format!("grid step {grid_step} must be at least 1/M = {}", 1.0 / m as f64)));
    }
    let nfft = ((1.0 / grid_step).round() as usize).max(1);
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(nfft);
    let mut avg = vec![0.0; nfft];
    let mut buf = vec![C64::new(0.0, 0.0); nfft];
    for row in &y.data {
        for &tau in lags {
            let len = m - tau;
            buf.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            // Fold onto the grid when it is coarser than the record.
            for n in 0..len {
                buf[n % nfft] += row[n + tau] * row[n];
            }
            fft.process(&mut buf);
            for (a, z) in avg.iter_mut().zip(&buf) {
                *a += z.norm() / len as f64;
            }
        }
    }
    let count = (y.n_sensors() * lags.len()) as f64;
    avg.iter_mut().for_each(|a| *a /= count);

    let mut sorted = avg.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = sorted[nfft / 2];
    let threshold = threshold_factor * median;

    let mut peaks: Vec<DetectedFrequency> = Vec::new();
    for k in 0..nfft {
        let v = avg[k];
        let prev = avg[(k + nfft - 1) % nfft];
        let next = avg[(k + 1) % nfft];
        if v <= threshold || v < prev || v < next || (v == prev && k > 0) {
            continue;
        }
        let den = prev - 2.0 * v + next;
        let shift = if den.abs() > 0.0 { (0.5 * (prev - next) / den).clamp(-0.5, 0.5) } else { 0.0 };
        let freq = wrap_freq((k as f64 + shift) / nfft as f64);
        peaks.push(DetectedFrequency { freq, statistic: v, ratio: if median > 0.0 { v / median } else { f64::INFINITY } });
    }
    // Merge peaks closer than 2/M, strongest first.
    peaks.sort_by(|a, b| b.statistic.total_cmp(&a.statistic));
    let merge_tol = 2.0 / m as f64;
    let mut out: Vec<DetectedFrequency> = Vec::new();
    for p in peaks {
        if !out.iter().any(|q| freq_distance(p.freq, q.freq) <= merge_tol) {
            out.push(p);
        }
    }
    out.sort_by(|a, b| a.freq.total_cmp(&b.freq));
    Ok(out)
}

/// Hit / miss / false-alarm bookkeeping of detections against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DetectionTally {
    pub hits: usize,
    pub misses: usize,
    pub false_alarms: usize,
}

/// A target in `I_cs` is hit when a detection lies within `tol`. Detections
/// matching any element of `I_c` are legitimate and never false alarms.
pub fn tally_detections(detected: &[f64], truth: &CyclicFrequencySets, tol: f64) -> DetectionTally {
    let hits = truth.i_cs.iter().filter(|&&f| detected.iter().any(|&d| freq_distance(d, f) <= tol)).count();
    let false_alarms = detected.iter().filter(|&&d| !truth.contains_c(d, tol)).count();
    DetectionTally { hits, misses: truth.i_cs.len() - hits, false_alarms }
}
