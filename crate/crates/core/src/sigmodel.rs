//! Symbol generation, root-raised-cosine pulse shaping and exact fractional
//! sampling of linearly modulated sources.
//!
//! A source `k` is the continuous-time signal
//! `s_k(t) = sum_j a_j g(t - j T_k)` sampled at `t = t0 + n T_e`. The ratio
//! `T_e / T_k` is arbitrary, so every sample is obtained by evaluating the
//! closed-form pulse directly; there is no polyphase shortcut.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Symbol alphabet of a source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    /// Real `+1 / -1` symbols (non-circular).
    Bpsk,
    /// Unit-variance QPSK, second-order circular (`E a^2 = 0`).
    #[serde(alias = "qpsk", alias = "circular")]
    CircularQpsk,
}

impl Modulation {
    /// Fourth-order cumulant `cum(a, a*, a, a*)` of the unit-variance alphabet.
    pub fn kurtosis(self) -> f64 {
        match self {
            Modulation::Bpsk => -2.0,
            Modulation::CircularQpsk => -1.0,
        }
    }

    pub fn is_circular(self) -> bool {
        matches!(self, Modulation::CircularQpsk)
    }

    /// Nearest constellation point.
    pub fn decide(self, z: C64) -> C64 {
        match self {
            Modulation::Bpsk => C64::new(if z.re >= 0.0 { 1.0 } else { -1.0 }, 0.0),
            Modulation::CircularQpsk => C64::new(
                if z.re >= 0.0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 },
                if z.im >= 0.0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 },
            ),
        }
    }
}

/// One transmitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub kind: Modulation,
    /// Symbol period `T`, seconds.
    pub symbol_period: f64,
    /// Excess bandwidth factor, in `[0, 1)`.
    pub gamma: f64,
    /// Carrier frequency offset, Hz.
    pub freq_offset_hz: f64,
    /// Linear power scale.
    pub power: f64,
}

impl SourceSpec {
    pub fn new(kind: Modulation, symbol_period: f64, gamma: f64, freq_offset_hz: f64) -> Result<Self> {
        let spec = SourceSpec { kind, symbol_period, gamma, freq_offset_hz, power: 1.0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_power(mut self, power: f64) -> Self {
        self.power = power;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.symbol_period > 0.0) || !self.symbol_period.is_finite() {
            return Err(Error::Domain(format!("symbol period must be positive, got {}", self.symbol_period)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Domain(format!("excess bandwidth must lie in [0, 1), got {}", self.gamma)));
        }
        if !self.freq_offset_hz.is_finite() {
            return Err(Error::Domain("carrier offset must be finite".into()));
        }
        if !(self.power >= 0.0) || !self.power.is_finite() {
            return Err(Error::Domain(format!("power must be non-negative, got {}", self.power)));
        }
        Ok(())
    }

    /// Normalized cyclic frequency `T_e / T`, cycles/sample.
    pub fn alpha(&self, sample_period: f64) -> f64 {
        sample_period / self.symbol_period
    }

    /// Normalized carrier offset `Delta f * T_e`, cycles/sample.
    pub fn delta_f(&self, sample_period: f64) -> f64 {
        self.freq_offset_hz * sample_period
    }

    /// One-sided bandwidth of the complex envelope after the offset, Hz.
    pub fn half_band_hz(&self) -> f64 {
        (1.0 + self.gamma) / (2.0 * self.symbol_period) + self.freq_offset_hz.abs()
    }
}

/// Symbols `a_j` for `j = first_index .. first_index + values.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolSequence {
    pub kind: Modulation,
    pub first_index: i64,
    pub values: Vec<C64>,
}

impl SymbolSequence {
    pub fn new(kind: Modulation, first_index: i64, values: Vec<C64>) -> Self {
        SymbolSequence { kind, first_index, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index one past the last symbol.
    pub fn end_index(&self) -> i64 {
        self.first_index + self.values.len() as i64
    }

    /// Symbol `a_j`, zero outside the stored range.
    pub fn get(&self, j: i64) -> C64 {
        let k = j - self.first_index;
        if k < 0 || k >= self.values.len() as i64 {
            C64::new(0.0, 0.0)
        } else {
            self.values[k as usize]
        }
    }

    pub fn with_first_index(mut self, first_index: i64) -> Self {
        self.first_index = first_index;
        self
    }
}

/// Draws `n` i.i.d. unit-variance symbols from a seed.
pub fn gen_symbols(kind: Modulation, n: usize, seed: u64) -> Result<SymbolSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gen_symbols_with_rng(kind, n, &mut rng)
}

pub fn gen_symbols_with_rng<R: Rng + ?Sized>(kind: Modulation, n: usize, rng: &mut R) -> Result<SymbolSequence> {
    if n == 0 {
        return Err(Error::EmptyInput("symbol count must be at least 1"));
    }
    let values = (0..n)
        .map(|_| match kind {
            Modulation::Bpsk => C64::new(if rng.random::<bool>() { 1.0 } else { -1.0 }, 0.0),
            Modulation::CircularQpsk => {
                let re = if rng.random::<bool>() { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
                let im = if rng.random::<bool>() { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
                C64::new(re, im)
            }
        })
        .collect();
    Ok(SymbolSequence::new(kind, 0, values))
}

/// Root-raised-cosine pulse with closed-form evaluation.
///
/// Normalized so that `(1/T) * integral g(t)^2 dt = 1`: a unit-variance
/// symbol stream yields a unit-power sampled signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseShape {
    pub symbol_period: f64,
    pub gamma: f64,
    /// Truncation half-width in symbol periods.
    pub span_symbols: usize,
}

/// Default truncation half-width for a rolloff. Small rolloffs decay like a
/// sinc and need much longer spans to keep out-of-band leakage low.
pub fn default_span(gamma: f64) -> usize {
    if gamma >= 0.1 {
        32
    } else if gamma >= 0.01 {
        128
    } else {
        1024
    }
}

pub fn rrc_pulse(symbol_period: f64, gamma: f64) -> Result<PulseShape> {
    if !(symbol_period > 0.0) || !symbol_period.is_finite() {
        return Err(Error::Domain(format!("symbol period must be positive, got {symbol_period}")));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Domain(format!("excess bandwidth must lie in [0, 1), got {gamma}")));
    }
    Ok(PulseShape { symbol_period, gamma, span_symbols: default_span(gamma) })
}

impl PulseShape {
    pub fn with_span(mut self, span_symbols: usize) -> Self {
        self.span_symbols = span_symbols;
        self
    }

    /// Half-width of the truncated support, seconds.
    pub fn support(&self) -> f64 {
        self.span_symbols as f64 * self.symbol_period
    }

    /// Untruncated closed form at time `t` (seconds).
    pub fn eval(&self, t: f64) -> f64 {
        rrc_unit(t / self.symbol_period, self.gamma)
    }

    /// Truncated pulse: zero beyond the span.
    pub fn eval_truncated(&self, t: f64) -> f64 {
        if t.abs() > self.support() {
            0.0
        } else {
            self.eval(t)
        }
    }

    /// Fourier transform `g^(nu)`, real and even.
    pub fn spectrum(&self, nu: f64) -> f64 {
        let t = self.symbol_period;
        let f = (nu * t).abs();
        let g = self.gamma;
        if f <= (1.0 - g) / 2.0 {
            t
        } else if f <= (1.0 + g) / 2.0 {
            t * (PI / (2.0 * g) * (f - (1.0 - g) / 2.0)).cos()
        } else {
            0.0
        }
    }

    /// Band edge `(1 + gamma) / (2T)`, Hz.
    pub fn band_edge(&self) -> f64 {
        (1.0 + self.gamma) / (2.0 * self.symbol_period)
    }
}

/// Root-raised-cosine with unit symbol period evaluated at `x = t / T`.
fn rrc_unit(x: f64, gamma: f64) -> f64 {
    if x.abs() < 1e-12 {
        return 1.0 - gamma + 4.0 * gamma / PI;
    }
    if gamma > 0.0 {
        let x0 = 1.0 / (4.0 * gamma);
        let d = x.abs() - x0;
        if d.abs() < 1e-5 {
            if d == 0.0 {
                return gamma / 2f64.sqrt()
                    * ((1.0 + 2.0 / PI) * (PI / (4.0 * gamma)).sin() + (1.0 - 2.0 / PI) * (PI / (4.0 * gamma)).cos());
            }
            // Linear interpolation across the removable singularity.
            let lo = rrc_formula(x0 - 1e-5, gamma);
            let hi = rrc_formula(x0 + 1e-5, gamma);
            return lo + (hi - lo) * (d + 1e-5) / 2e-5;
        }
    }
    rrc_formula(x, gamma)
}

#[inline]
fn rrc_formula(x: f64, gamma: f64) -> f64 {
    let num = (PI * x * (1.0 - gamma)).sin() + 4.0 * gamma * x * (PI * x * (1.0 + gamma)).cos();
    let den = PI * x * (1.0 - (4.0 * gamma * x).powi(2));
    num / den
}

/// A sampled source before the carrier offset is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSource {
    pub samples: Vec<C64>,
    pub sample_period: f64,
    /// `T_e / T`, cycles/sample.
    pub alpha: f64,
    /// `Delta f * T_e`, cycles/sample.
    pub delta_f: f64,
    pub t0: f64,
}

/// Samples `sqrt(power) * sum_j a_j g(t0 + n T_e - j T)` for `n = 0 .. n_samples`.
pub fn synth_source(
    spec: &SourceSpec,
    symbols: &SymbolSequence,
    sample_period: f64,
    n_samples: usize,
    t0: f64,
) -> Result<SampledSource> {
    spec.validate()?;
    let pulse = rrc_pulse(spec.symbol_period, spec.gamma)?;
    synth_with_pulse(spec, &pulse, symbols, sample_period, n_samples, t0)
}

/// Same as [`synth_source`] with an explicit (possibly re-spanned) pulse.
pub fn synth_with_pulse(
    spec: &SourceSpec,
    pulse: &PulseShape,
    symbols: &SymbolSequence,
    sample_period: f64,
    n_samples: usize,
    t0: f64,
) -> Result<SampledSource> {
    if !(sample_period > 0.0) {
        return Err(Error::Domain(format!("sample period must be positive, got {sample_period}")));
    }
    if n_samples == 0 {
        return Err(Error::EmptyInput("n_samples must be at least 1"));
    }
    if symbols.kind != spec.kind {
        return Err(Error::Config("symbol alphabet does not match the source modulation".into()));
    }
    let t = spec.symbol_period;
    let span = pulse.span_symbols as f64;
    let t_last = t0 + (n_samples - 1) as f64 * sample_period;
    let need_lo = ((t0 / t) - span).ceil() as i64;
    let need_hi = ((t_last / t) + span).floor() as i64;
    if need_lo < symbols.first_index || need_hi >= symbols.end_index() {
        return Err(Error::Coverage(format!(
            "need symbols {need_lo}..={need_hi}, have {}..{}",
            symbols.first_index,
            symbols.end_index()
        )));
    }
    let scale = spec.power.sqrt();
    let gamma = pulse.gamma;
    let samples = (0..n_samples)
        .map(|n| {
            let x = (t0 + n as f64 * sample_period) / t;
            let lo = (x - span).ceil() as i64;
            let hi = (x + span).floor() as i64;
            let acc = if gamma == 0.0 {
                sinc_sum(x, lo, hi, symbols)
            } else {
                let mut acc = C64::new(0.0, 0.0);
                for j in lo..=hi {
                    acc += symbols.get(j) * rrc_unit(x - j as f64, gamma);
                }
                acc
            };
            acc * scale
        })
        .collect();
    Ok(SampledSource { samples, sample_period, alpha: spec.alpha(sample_period), delta_f: spec.delta_f(sample_period), t0 })
}

/// `sum_j a_j sinc(x - j)` using `sin(pi (x - j)) = (-1)^j sin(pi x)`.
fn sinc_sum(x: f64, lo: i64, hi: i64, symbols: &SymbolSequence) -> C64 {
    let nearest = x.round();
    if (x - nearest).abs() < 1e-12 {
        return symbols.get(nearest as i64);
    }
    let s = (PI * x).sin() / PI;
    let mut acc = C64::new(0.0, 0.0);
    for j in lo..=hi {
        let sign = if j.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        acc += symbols.get(j) * (sign / (x - j as f64));
    }
    acc * s
}

/// `y(n) = exp(2 i pi n delta_f) x(n)` with `n` counted from 0.
pub fn apply_offset(x: &[C64], delta_f: f64) -> Vec<C64> {
    apply_offset_from(x, delta_f, 0)
}

/// Offset with the time index of `x[0]` equal to `origin`.
pub fn apply_offset_from(x: &[C64], delta_f: f64, origin: i64) -> Vec<C64> {
    x.iter().enumerate().map(|(i, &v)| v * rotation(delta_f, origin + i as i64)).collect()
}

/// `exp(2 i pi n f)` with the phase reduced modulo one cycle first.
#[inline]
pub fn rotation(f: f64, n: i64) -> C64 {
    let cycles = (n as f64 * f).rem_euclid(1.0);
    C64::from_polar(1.0, 2.0 * PI * cycles)
}

/// Strict sampling condition `1/(2 T_e) > max_k ((1+gamma_k)/(2 T_k) + |Delta f_k|)`.
pub fn check_shannon(specs: &[SourceSpec], sample_period: f64) -> bool {
    let nyquist = 1.0 / (2.0 * sample_period);
    specs.iter().all(|s| nyquist > s.half_band_hz())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(v: impl Iterator<Item = f64>) -> f64 {
        let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
        s / n as f64
    }

    #[test]
    fn bpsk_moments_and_kurtosis() {
        let a = gen_symbols(Modulation::Bpsk, 100_000, 7).unwrap();
        let m = mean(a.values.iter().map(|z| z.re));
        let v = mean(a.values.iter().map(|z| z.norm_sqr()));
        assert!(m.abs() < 0.02);
        assert!((v - 1.0).abs() < 0.02);
        assert!(a.values.iter().all(|z| z.im == 0.0 && z.re.abs() == 1.0));
        // c4 = E|a|^4 - 2 (E|a|^2)^2 - |E a^2|^2
        let m4 = mean(a.values.iter().map(|z| z.norm_sqr().powi(2)));
        let m2c = a.values.iter().map(|z| z * z).sum::<C64>() / a.len() as f64;
        let c4 = m4 - 2.0 * v * v - m2c.norm_sqr();
        assert!((c4 + 2.0).abs() < 0.05, "c4 = {c4}");
    }

    #[test]
    fn qpsk_is_circular() {
        let a = gen_symbols(Modulation::CircularQpsk, 100_000, 3).unwrap();
        let m2c = a.values.iter().map(|z| z * z).sum::<C64>() / a.len() as f64;
        assert!(m2c.norm() <= 0.02);
        assert!((mean(a.values.iter().map(|z| z.norm_sqr())) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symbols_reproducible_and_nonempty() {
        assert_eq!(gen_symbols(Modulation::Bpsk, 10, 1).unwrap(), gen_symbols(Modulation::Bpsk, 10, 1).unwrap());
        assert_eq!(gen_symbols(Modulation::Bpsk, 0, 1), Err(Error::EmptyInput("symbol count must be at least 1")));
    }

    #[test]
    fn rrc_domain_errors() {
        assert!(rrc_pulse(1.0, 1.0).is_err());
        assert!(rrc_pulse(1.0, -0.1).is_err());
        assert!(rrc_pulse(0.0, 0.5).is_err());
    }

    #[test]
    fn zero_rolloff_is_sinc() {
        let p = rrc_pulse(2.0, 0.0).unwrap();
        for &t in &[0.0, 0.3, 1.0, 2.0, 3.7, -5.1] {
            let x: f64 = t / 2.0;
            let sinc = if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
            assert!((p.eval(t) - sinc).abs() < 1e-14);
        }
    }

    #[test]
    fn removable_singularities_are_continuous() {
        for &g in &[0.25, 0.5, 0.9] {
            let p = rrc_pulse(1.0, g).unwrap();
            let x0 = 1.0 / (4.0 * g);
            let at = p.eval(x0);
            assert!((p.eval(x0 + 2e-5) - at).abs() < 1e-4);
            assert!((p.eval(x0 - 3e-6) - at).abs() < 1e-4);
            assert!((p.eval(1e-13) - p.eval(0.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn single_symbol_reproduces_pulse() {
        let spec = SourceSpec::new(Modulation::Bpsk, 1.0, 0.5, 0.0).unwrap();
        let mut v = vec![C64::new(0.0, 0.0); 101];
        v[50] = C64::new(1.0, 0.0);
        let syms = SymbolSequence::new(Modulation::Bpsk, -50, v);
        let te = 1.0 / 1.6;
        let s = synth_source(&spec, &syms, te, 20, 0.3).unwrap();
        let p = rrc_pulse(1.0, 0.5).unwrap();
        for (n, z) in s.samples.iter().enumerate() {
            assert!((z.re - p.eval(0.3 + n as f64 * te)).abs() < 1e-14);
            assert_eq!(z.im, 0.0);
        }
    }

    #[test]
    fn coverage_error() {
        let spec = SourceSpec::new(Modulation::Bpsk, 1.0, 0.5, 0.0).unwrap();
        let syms = gen_symbols(Modulation::Bpsk, 100, 1).unwrap();
        assert!(matches!(synth_source(&spec, &syms, 0.5, 10, 0.0), Err(Error::Coverage(_))));
    }

    #[test]
    fn offset_rotation() {
        let x = vec![C64::new(1.0, 0.0); 8];
        assert_eq!(apply_offset(&x, 0.0), x);
        let y = apply_offset(&x, 0.25);
        let want = [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)];
        for (i, z) in y.iter().enumerate() {
            assert!((z - want[i % 4]).norm() < 1e-15);
        }
        let e0: f64 = x.iter().map(|z| z.norm_sqr()).sum();
        let e1: f64 = apply_offset(&x, 0.1234).iter().map(|z| z.norm_sqr()).sum();
        assert!((e0 - e1).abs() < 1e-12);
    }

    #[test]
    fn shannon_condition() {
        let t = 3.6e-6;
        let s = SourceSpec::new(Modulation::Bpsk, t, 0.5, 0.0).unwrap();
        assert!(check_shannon(&[s], t / 1.6));
        assert!(!check_shannon(&[s], t));
        // 1/(2 Te) == 0.75 / T exactly
        let s1 = SourceSpec::new(Modulation::Bpsk, 1.0, 0.5, 0.0).unwrap();
        assert!(!check_shannon(&[s1], 1.0 / 1.5));
    }
}
