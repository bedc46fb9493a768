//! Godard (constant modulus) cost and its non-conjugate-cyclic modification,
//! multichannel FIR separators, Wirtinger gradients, backtracking steepest
//! descent, and the source-wise expansion of both costs.

use serde::{Deserialize, Serialize};

use crate::channel::MultichannelSignal;
use crate::cyclostats::{conj_cyclic_corr, cyclic_corr, freq_distance, freq_sets, CyclicFrequencySets, FREQ_TOL};
use crate::sigmodel::{rotation, Modulation};
use crate::{Error, Result, C64};

/// N-input, single-output FIR `g(z) = sum_{l=-L..L} g(l) z^-l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatorFilter {
    pub half_len: usize,
    /// `taps[m][l + L]` is `g_m(l)`.
    pub taps: Vec<Vec<C64>>,
}

impl SeparatorFilter {
    pub fn zeros(n_sensors: usize, half_len: usize) -> Self {
        SeparatorFilter { half_len, taps: vec![vec![C64::new(0.0, 0.0); 2 * half_len + 1]; n_sensors] }
    }

    /// Unit tap at lag 0 on one sensor.
    pub fn center_spike(n_sensors: usize, half_len: usize, sensor: usize) -> Self {
        let mut g = Self::zeros(n_sensors, half_len);
        g.taps[sensor][half_len] = C64::new(1.0, 0.0);
        g
    }

    /// Center spike on the sensor with the largest energy.
    pub fn default_init(y: &MultichannelSignal, half_len: usize) -> Self {
        let best = (0..y.n_sensors())
            .map(|m| (m, y.sensor(m).iter().map(|z| z.norm_sqr()).sum::<f64>()))
            .fold((0, f64::NEG_INFINITY), |acc, (m, e)| if e > acc.1 { (m, e) } else { acc })
            .0;
        Self::center_spike(y.n_sensors(), half_len, best)
    }

    pub fn from_taps(taps: Vec<Vec<C64>>) -> Result<Self> {
        let width = taps.first().map_or(0, Vec::len);
        if taps.is_empty() || width.is_multiple_of(2) || taps.iter().any(|t| t.len() != width) {
            return Err(Error::Domain("taps must form an N x (2L+1) matrix".into()));
        }
        if taps.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain("filter taps must be finite".into()));
        }
        Ok(SeparatorFilter { half_len: width / 2, taps })
    }

    pub fn n_sensors(&self) -> usize {
        self.taps.len()
    }

    pub fn width(&self) -> usize {
        2 * self.half_len + 1
    }

    pub fn tap(&self, m: usize, l: i64) -> C64 {
        self.taps[m][(l + self.half_len as i64) as usize]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.taps.iter().flatten().map(|z| z.norm_sqr()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.taps.iter().flatten().all(|z| *z == C64::new(0.0, 0.0))
    }

    /// `Re <self, other>` with the first argument conjugated.
    pub fn real_dot(&self, other: &Self) -> f64 {
        self.taps.iter().flatten().zip(other.taps.iter().flatten()).map(|(a, b)| (a.conj() * b).re).sum()
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        SeparatorFilter {
            half_len: self.half_len,
            taps: self.taps.iter().zip(&other.taps).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y * s).collect()).collect(),
        }
    }

    pub fn scaled(&self, c: C64) -> Self {
        SeparatorFilter {
            half_len: self.half_len,
            taps: self.taps.iter().map(|row| row.iter().map(|z| z * c).collect()).collect(),
        }
    }
}

/// Valid-region output `r(i) = sum_m sum_l g_m(l) y_m(i + L - l)`, length `M - 2L`.
pub fn apply_filter(g: &SeparatorFilter, y: &MultichannelSignal) -> Result<Vec<C64>> {
    let l = g.half_len;
    let m = y.len();
    if m <= 2 * l {
        return Err(Error::Domain(format!("record length {m} must exceed 2L = {}", 2 * l)));
    }
    if g.n_sensors() != y.n_sensors() {
        return Err(Error::Domain(format!("filter has {} inputs, signal has {} sensors", g.n_sensors(), y.n_sensors())));
    }
    let out_len = m - 2 * l;
    let mut r = vec![C64::new(0.0, 0.0); out_len];
    for (taps, row) in g.taps.iter().zip(&y.data) {
        for (k, &c) in taps.iter().enumerate() {
            if c == C64::new(0.0, 0.0) {
                continue;
            }
            // lag l_k = k - L reads y(i + 2L - k)
            let src = &row[2 * l - k..2 * l - k + out_len];
            for (ri, &yi) in r.iter_mut().zip(src) {
                *ri += c * yi;
            }
        }
    }
    Ok(r)
}

/// `(1/M) sum (|r|^2 - 1)^2`.
pub fn godard_cost(r: &[C64]) -> Result<f64> {
    if r.is_empty() {
        return Err(Error::Domain("cost of an empty sequence".into()));
    }
    Ok(r.iter().map(|z| (z.norm_sqr() - 1.0).powi(2)).sum::<f64>() / r.len() as f64)
}

fn check_distinct(freqs: &[f64]) -> Result<()> {
    for (i, &a) in freqs.iter().enumerate() {
        if freqs[..i].iter().any(|&b| freq_distance(a, b) < FREQ_TOL) {
            return Err(Error::Config(format!("duplicate significant frequency {a}")));
        }
    }
    Ok(())
}

/// Godard cost minus `|R_c^(a)(0)|^2` summed over `sig_freqs`.
pub fn modified_cost(r: &[C64], sig_freqs: &[f64]) -> Result<f64> {
    check_distinct(sig_freqs)?;
    let mut j = godard_cost(r)?;
    for &a in sig_freqs {
        j -= conj_cyclic_corr(r, a, 0)?.norm_sqr();
    }
    Ok(j)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CostKind {
    Godard,
    /// Modified cost with the given significant non-conjugate frequencies.
    Modified(Vec<f64>),
}

impl CostKind {
    pub fn sig_freqs(&self) -> &[f64] {
        match self {
            CostKind::Godard => &[],
            CostKind::Modified(f) => f,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            CostKind::Godard => "J",
            CostKind::Modified(_) => "Jmod",
        }
    }
}

/// Cost and gradient evaluator that caches the rotation tables.
pub struct CostEvaluator<'a> {
    y: &'a MultichannelSignal,
    half_len: usize,
    rotations: Vec<Vec<C64>>,
}

impl<'a> CostEvaluator<'a> {
    pub fn new(y: &'a MultichannelSignal, half_len: usize, sig_freqs: &[f64]) -> Result<Self> {
        check_distinct(sig_freqs)?;
        if y.len() <= 2 * half_len {
            return Err(Error::Domain(format!("record length {} must exceed 2L = {}", y.len(), 2 * half_len)));
        }
        let n = y.len() - 2 * half_len;
        let rotations = sig_freqs.iter().map(|&a| (0..n as i64).map(|i| rotation(-a, i)).collect()).collect();
        Ok(CostEvaluator { y, half_len, rotations })
    }

    fn check(&self, g: &SeparatorFilter) -> Result<()> {
        if g.half_len != self.half_len {
            return Err(Error::Domain("filter length does not match the evaluator".into()));
        }
        Ok(())
    }

    fn conj_terms(&self, r: &[C64]) -> Vec<C64> {
        let inv = 1.0 / r.len() as f64;
        self.rotations.iter().map(|rot| r.iter().zip(rot).map(|(z, e)| z * z * e).sum::<C64>() * inv).collect()
    }

    pub fn cost(&self, g: &SeparatorFilter) -> Result<f64> {
        self.check(g)?;
        let r = apply_filter(g, self.y)?;
        Ok(self.cost_of_output(&r))
    }

    fn cost_of_output(&self, r: &[C64]) -> f64 {
        let j = r.iter().map(|z| (z.norm_sqr() - 1.0).powi(2)).sum::<f64>() / r.len() as f64;
        j - self.conj_terms(r).iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    /// Cost and its derivative with respect to the conjugated taps.
    pub fn cost_and_gradient(&self, g: &SeparatorFilter) -> Result<(f64, SeparatorFilter)> {
        self.check(g)?;
        let r = apply_filter(g, self.y)?;
        Ok(self.cost_and_gradient_at(&r))
    }

    /// Cost and gradient from an already computed output `r = g * y`.
    pub fn cost_and_gradient_at(&self, r: &[C64]) -> (f64, SeparatorFilter) {
        let n = r.len();
        let scale = 2.0 / n as f64;
        let cs = self.conj_terms(r);
        let j =
            r.iter().map(|z| (z.norm_sqr() - 1.0).powi(2)).sum::<f64>() / n as f64 - cs.iter().map(|c| c.norm_sqr()).sum::<f64>();
        // dJ/dg_m(l)* = sum_i w_i conj(y_m(i + L - l))
        let mut w: Vec<C64> = r.iter().map(|z| z * ((z.norm_sqr() - 1.0) * scale)).collect();
        for (c, rot) in cs.iter().zip(&self.rotations) {
            for ((wi, z), e) in w.iter_mut().zip(r).zip(rot) {
                *wi -= c * z.conj() * e.conj() * scale;
            }
        }
        let l = self.half_len;
        let mut grad = SeparatorFilter::zeros(self.y.n_sensors(), l);
        for (gt, row) in grad.taps.iter_mut().zip(&self.y.data) {
            for (k, gk) in gt.iter_mut().enumerate() {
                *gk = dot_conj(&w, &row[2 * l - k..2 * l - k + n]);
            }
        }
        (j, grad)
    }

    /// Coefficients `[c0, .., c4]` of the cost along the line `r + s u`,
    /// which is a quartic polynomial in the real step `s`.
    pub fn line_polynomial(&self, r: &[C64], u: &[C64]) -> [f64; 5] {
        let n = r.len() as f64;
        let mut p = [0.0; 5];
        for (z, d) in r.iter().zip(u) {
            let a = z.norm_sqr() - 1.0;
            let b = (z.conj() * d).re;
            let c = d.norm_sqr();
            p[0] += a * a;
            p[1] += 4.0 * a * b;
            p[2] += 4.0 * b * b + 2.0 * a * c;
            p[3] += 4.0 * b * c;
            p[4] += c * c;
        }
        p.iter_mut().for_each(|v| *v /= n);
        for rot in &self.rotations {
            let (mut c0, mut c1, mut c2) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0));
            for ((z, d), e) in r.iter().zip(u).zip(rot) {
                c0 += z * z * e;
                c1 += z * d * e;
                c2 += d * d * e;
            }
            let (c0, c1, c2) = (c0 / n, c1 / n, c2 / n);
            p[0] -= c0.norm_sqr();
            p[1] -= 4.0 * (c0.conj() * c1).re;
            p[2] -= 4.0 * c1.norm_sqr() + 2.0 * (c0.conj() * c2).re;
            p[3] -= 4.0 * (c1.conj() * c2).re;
            p[4] -= c2.norm_sqr();
        }
        p
    }
}

/// `sum_i a_i conj(b_i)` with independent partial sums so the loop pipelines.
fn dot_conj(a: &[C64], b: &[C64]) -> C64 {
    let mut re = [0.0f64; 4];
    let mut im = [0.0f64; 4];
    let (ca, ta) = a.split_at(a.len() - a.len() % 4);
    for (x, y) in ca.chunks_exact(4).zip(b.chunks_exact(4)) {
        for j in 0..4 {
            re[j] += x[j].re * y[j].re + x[j].im * y[j].im;
            im[j] += x[j].im * y[j].re - x[j].re * y[j].im;
        }
    }
    let mut acc = C64::new(re.iter().sum(), im.iter().sum());
    for (x, y) in ta.iter().zip(&b[ca.len()..]) {
        acc += x * y.conj();
    }
    acc
}

fn poly_eval(p: &[f64; 5], s: f64) -> f64 {
    (((p[4] * s + p[3]) * s + p[2]) * s + p[1]) * s + p[0]
}

/// Real roots of `a s^3 + b s^2 + c s + d`.
fn cubic_roots(a: f64, b: f64, c: f64, d: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs()).max(d.abs());
    if scale == 0.0 {
        return Vec::new();
    }
    if a.abs() <= 1e-14 * scale {
        if b.abs() <= 1e-14 * scale {
            return if c != 0.0 { vec![-d / c] } else { Vec::new() };
        }
        let disc = c * c - 4.0 * b * d;
        if disc < 0.0 {
            return Vec::new();
        }
        let q = -0.5 * (c + c.signum() * disc.sqrt());
        let mut v = Vec::new();
        if q != 0.0 {
            v.push(d / q);
            v.push(q / b);
        } else {
            v.push(0.0);
        }
        return v;
    }
    let (b, c, d) = (b / a, c / a, d / a);
    let q = (b * b - 3.0 * c) / 9.0;
    let r = (2.0 * b * b * b - 9.0 * b * c + 27.0 * d) / 54.0;
    if r * r < q * q * q {
        let theta = (r / (q * q * q).sqrt()).clamp(-1.0, 1.0).acos();
        let m = -2.0 * q.sqrt();
        (0..3).map(|k| m * ((theta + 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos() - b / 3.0).collect()
    } else {
        let aa = -r.signum() * (r.abs() + (r * r - q * q * q).sqrt()).cbrt();
        let bb = if aa != 0.0 { q / aa } else { 0.0 };
        vec![aa + bb - b / 3.0]
    }
}

/// Minimizer of the line polynomial over `s > 0`, if one exists.
fn best_step(p: &[f64; 5]) -> Option<f64> {
    if p[4] < 0.0 {
        return None;
    }
    cubic_roots(4.0 * p[4], 3.0 * p[3], 2.0 * p[2], p[1])
        .into_iter()
        .filter(|s| *s > 0.0 && s.is_finite())
        .min_by(|a, b| poly_eval(p, *a).total_cmp(&poly_eval(p, *b)))
}

/// Gradient of the Godard cost, or of the modified cost when `sig_freqs` is
/// given, with respect to the conjugated taps. The first-order change of the
/// cost along `d` is `2 Re <grad, d>`.
pub fn cost_gradient(g: &SeparatorFilter, y: &MultichannelSignal, sig_freqs: Option<&[f64]>) -> Result<SeparatorFilter> {
    let ev = CostEvaluator::new(y, g.half_len, sig_freqs.unwrap_or(&[]))?;
    Ok(ev.cost_and_gradient(g)?.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    pub max_iter: usize,
    /// Relative cost decrease below which the descent stops.
    pub tol: f64,
    /// Gradient norm below which the descent stops.
    pub grad_tol: f64,
    pub initial_step: f64,
    pub armijo: f64,
    pub shrink: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions { max_iter: 2000, tol: 1e-8, grad_tol: 1e-10, initial_step: 0.1, armijo: 1e-4, shrink: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub cost: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeResult {
    pub filter: SeparatorFilter,
    pub trace: Vec<TracePoint>,
    pub iterations: usize,
    pub converged: bool,
}

impl MinimizeResult {
    pub fn final_cost(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |t| t.cost)
    }
}

/// Steepest descent with Armijo backtracking. Along the descent direction
/// the cost is a quartic in the step, so the first trial step is its exact
/// minimizer (or twice the last accepted step when the quartic has no
/// positive minimizer) and every trial costs one pass over the output.
pub fn minimize(g0: &SeparatorFilter, y: &MultichannelSignal, kind: &CostKind, opts: &MinimizeOptions) -> Result<MinimizeResult> {
    if g0.is_zero() {
        return Err(Error::Domain("initial filter must be nonzero".into()));
    }
    let ev = CostEvaluator::new(y, g0.half_len, kind.sig_freqs())?;
    ev.check(g0)?;
    let mut g = g0.clone();
    let mut r = apply_filter(&g, y)?;
    let mut trace = Vec::new();
    let mut step = opts.initial_step;
    let (mut f, mut grad) = ev.cost_and_gradient_at(&r);
    let mut converged = false;
    let mut iterations = 0;
    loop {
        let gn2 = grad.norm_sqr();
        if !f.is_finite() || !gn2.is_finite() {
            trace.push(TracePoint { cost: f, grad_norm: gn2.sqrt() });
            return Err(Error::Numerical {
                message: "non-finite cost during descent".into(),
                trace: trace.iter().map(|t| t.cost).collect(),
            });
        }
        trace.push(TracePoint { cost: f, grad_norm: gn2.sqrt() });
        if gn2.sqrt() < opts.grad_tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        let dir = grad.scaled(C64::new(-1.0, 0.0));
        let u = apply_filter(&dir, y)?;
        let poly = ev.line_polynomial(&r, &u);
        let mut s = best_step(&poly).unwrap_or(2.0 * step);
        let accepted = loop {
            let fc = poly_eval(&poly, s);
            if fc.is_finite() && fc <= f - opts.armijo * s * 2.0 * gn2 {
                break Some(fc);
            }
            s *= opts.shrink;
            if s < 1e-30 {
                break None;
            }
        };
        iterations += 1;
        let Some(fc) = accepted else {
            converged = true;
            break;
        };
        g = g.axpy(s, &dir);
        step = s;
        // Refresh the output exactly from time to time against drift.
        if iterations % 64 == 0 {
            r = apply_filter(&g, y)?;
        } else {
            r.iter_mut().zip(&u).for_each(|(a, b)| *a += b * s);
        }
        let rel = (f - fc) / f.abs().max(1e-12);
        let (fn_, gr) = ev.cost_and_gradient_at(&r);
        f = fn_;
        grad = gr;
        if rel < opts.tol {
            trace.push(TracePoint { cost: f, grad_norm: grad.norm_sqr().sqrt() });
            converged = true;
            break;
        }
    }
    Ok(MinimizeResult { filter: g, trace, iterations, converged })
}

/// One source seen at the separator output.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredSource {
    /// Unit-power `s~_k(n)`, carrier offset removed.
    pub tilde: Vec<C64>,
    /// `||f_k||^2`.
    pub norm_sq: f64,
    pub kind: Modulation,
    pub alpha: f64,
    pub delta_f: f64,
    /// Time-averaged fourth-order cumulant of `s~_k`, when it can be computed
    /// from the composite pulse.
    pub c4: Option<f64>,
}

impl FilteredSource {
    /// Splits a received contribution `exp(2 i pi n df) [f(z) s](n)` into
    /// norm and normalized derotated signal. `origin` is the time index of
    /// `contribution[0]`.
    pub fn from_contribution(
        contribution: &[C64],
        origin: i64,
        kind: Modulation,
        alpha: f64,
        delta_f: f64,
        c4: Option<f64>,
    ) -> Self {
        let n = contribution.len().max(1) as f64;
        let norm_sq = contribution.iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
        let tilde = if norm_sq > 0.0 {
            let s = 1.0 / norm_sq.sqrt();
            contribution.iter().enumerate().map(|(i, z)| z * rotation(-delta_f, origin + i as i64) * s).collect()
        } else {
            vec![C64::new(0.0, 0.0); contribution.len()]
        };
        FilteredSource { tilde, norm_sq, kind, alpha, delta_f, c4 }
    }
}

/// Coefficients of the source-wise expansion of J and J'.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionTerms {
    pub norms_sq: Vec<f64>,
    /// `beta(s~_k)` from the cumulant and cyclic-correlation sum.
    pub beta: Vec<f64>,
    /// `beta(s~_k)` as the fourth moment `<E|s~_k|^4>`.
    pub beta_moment: Vec<f64>,
    pub beta_prime: Vec<f64>,
    pub c4: Vec<f64>,
    /// `l[k1][k2]`, diagonal unused.
    pub l: Vec<Vec<f64>>,
    pub l_prime: Vec<Vec<f64>>,
    pub sets: CyclicFrequencySets,
}

fn corr0(x: &[C64], a: f64) -> C64 {
    if x.is_empty() {
        return C64::new(0.0, 0.0);
    }
    cyclic_corr(x, a, 0).expect("lag 0 is always valid")
}

fn ccorr0(x: &[C64], a: f64) -> C64 {
    if x.is_empty() {
        return C64::new(0.0, 0.0);
    }
    conj_cyclic_corr(x, a, 0).expect("lag 0 is always valid")
}

/// Estimates every coefficient of the expansion from per-source signals.
pub fn measure_terms(sources: &[FilteredSource]) -> Result<ExpansionTerms> {
    if sources.is_empty() {
        return Err(Error::EmptyInput("measure_terms needs at least one source"));
    }
    let items: Vec<_> = sources.iter().map(|s| (s.kind, s.alpha, s.delta_f)).collect();
    let sets = freq_sets(&items);
    let k = sources.len();
    let mut beta = Vec::with_capacity(k);
    let mut beta_moment = Vec::with_capacity(k);
    let mut beta_prime = Vec::with_capacity(k);
    let mut c4s = Vec::with_capacity(k);

    for s in sources {
        let x = &s.tilde;
        let n = x.len().max(1) as f64;
        let m4 = x.iter().map(|z| z.norm_sqr().powi(2)).sum::<f64>() / n;
        let cyc = 2.0 * (corr0(x, s.alpha).norm_sqr() + corr0(x, -s.alpha).norm_sqr());
        let (conj, own0) = if s.kind == Modulation::Bpsk {
            let r0 = ccorr0(x, 0.0).norm_sqr();
            (r0 + ccorr0(x, s.alpha).norm_sqr() + ccorr0(x, -s.alpha).norm_sqr(), r0)
        } else {
            (0.0, 0.0)
        };
        let c4 = match s.c4 {
            Some(c) => c,
            None => m4 - 2.0 - cyc - conj,
        };
        let b = if s.norm_sq > 0.0 { c4 + 2.0 + cyc + conj } else { 0.0 };
        // Other significant frequencies contribute only estimator noise but
        // are kept so that beta' matches its definition over I_cs.
        let others: f64 = sets
            .i_cs
            .iter()
            .filter(|&&f| freq_distance(f, 2.0 * s.delta_f) >= FREQ_TOL)
            .map(|&f| ccorr0(x, f - 2.0 * s.delta_f).norm_sqr())
            .sum();
        let sub = if s.kind == Modulation::Bpsk { own0 } else { 0.0 } + others;
        c4s.push(c4);
        beta.push(b);
        beta_moment.push(m4);
        beta_prime.push(b - sub);
    }

    let mut l = vec![vec![0.0; k]; k];
    let mut l_prime = vec![vec![0.0; k]; k];
    for k1 in 0..k {
        for k2 in 0..k {
            if k1 == k2 {
                continue;
            }
            let (a, b) = (&sources[k1], &sources[k2]);
            let mut acc = C64::new(0.0, 0.0);
            for &f in &sets.i_star {
                acc += 2.0 * corr0(&a.tilde, f) * corr0(&b.tilde, f).conj();
            }
            for &f in &sets.i_c {
                acc += ccorr0(&a.tilde, f - 2.0 * a.delta_f) * ccorr0(&b.tilde, f - 2.0 * b.delta_f).conj();
            }
            let mut sig = C64::new(0.0, 0.0);
            for &f in &sets.i_cs {
                sig += ccorr0(&a.tilde, f - 2.0 * a.delta_f) * ccorr0(&b.tilde, f - 2.0 * b.delta_f).conj();
            }
            l[k1][k2] = 2.0 + acc.re;
            l_prime[k1][k2] = 2.0 + acc.re - sig.re;
        }
    }
    Ok(ExpansionTerms {
        norms_sq: sources.iter().map(|s| s.norm_sq).collect(),
        beta,
        beta_moment,
        beta_prime,
        c4: c4s,
        l,
        l_prime,
        sets,
    })
}

/// `sum_k b_k ||f_k||^4 + sum_{k1 != k2} l ||f_k1||^2 ||f_k2||^2 - 2 sum ||f_k||^2 + 1`
/// with `(beta, l)` for J and `(beta', l')` for J'.
pub fn expansion_eval(terms: &ExpansionTerms, kind: &CostKind) -> Result<f64> {
    let k = terms.norms_sq.len();
    let (b, l) = match kind {
        CostKind::Godard => (&terms.beta, &terms.l),
        CostKind::Modified(_) => (&terms.beta_prime, &terms.l_prime),
    };
    if b.len() != k || l.len() != k || l.iter().any(|row| row.len() != k) {
        return Err(Error::Config("expansion terms are incomplete for the number of sources".into()));
    }
    let p = &terms.norms_sq;
    let mut v = 1.0;
    for k1 in 0..k {
        v += b[k1] * p[k1] * p[k1] - 2.0 * p[k1];
        for k2 in 0..k {
            if k1 != k2 {
                v += l[k1][k2] * p[k1] * p[k2];
            }
        }
    }
    Ok(v)
}

/// Time-averaged cumulant `kappa (1/M) sum_n sum_j |phi(t0 + n T_e - j T)|^4`
/// of a sampled linear modulation with composite pulse `phi`.
pub fn c4_time_average(
    kappa: f64,
    phi: impl Fn(f64) -> C64,
    symbol_period: f64,
    sample_period: f64,
    t0: f64,
    n_samples: usize,
    support: f64,
) -> f64 {
    let mut acc = 0.0;
    for n in 0..n_samples {
        let t = t0 + n as f64 * sample_period;
        let lo = ((t - support) / symbol_period).ceil() as i64;
        let hi = ((t + support) / symbol_period).floor() as i64;
        for j in lo..=hi {
            acc += phi(t - j as f64 * symbol_period).norm_sqr().powi(2);
        }
    }
    kappa * acc / n_samples.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_c(rng: &mut ChaCha8Rng) -> C64 {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    fn random_signal(n: usize, m: usize, seed: u64) -> MultichannelSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MultichannelSignal::new((0..n).map(|_| (0..m).map(|_| rand_c(&mut rng)).collect()).collect(), 1.0).unwrap()
    }

    fn random_filter(n: usize, l: usize, seed: u64) -> SeparatorFilter {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SeparatorFilter::from_taps((0..n).map(|_| (0..2 * l + 1).map(|_| rand_c(&mut rng) * 0.3).collect()).collect()).unwrap()
    }

    #[test]
    fn godard_examples() {
        assert_eq!(godard_cost(&[C64::new(0.0, 0.0); 5]).unwrap(), 1.0);
        let u: Vec<C64> = (0..10).map(|k| C64::from_polar(1.0, k as f64)).collect();
        assert!(godard_cost(&u).unwrap() < 1e-28);
        assert!((godard_cost(&[C64::new(0.0, 0.0), C64::new(2f64.sqrt(), 0.0)]).unwrap() - 1.0).abs() < 1e-15);
        assert!(godard_cost(&[]).is_err());
    }

    #[test]
    fn modified_examples() {
        let df = 0.031;
        let r: Vec<C64> = (0..4000).map(|n| rotation(df, n) * if n % 3 == 0 { -1.0 } else { 1.0 }).collect();
        assert!((modified_cost(&r, &[2.0 * df]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(modified_cost(&r, &[]).unwrap(), godard_cost(&r).unwrap());
        assert!(matches!(modified_cost(&r, &[0.1, 0.1]), Err(Error::Config(_))));
    }

    #[test]
    fn filter_brute_force() {
        let y = random_signal(3, 60, 1);
        let g = random_filter(3, 4, 2);
        let r = apply_filter(&g, &y).unwrap();
        assert_eq!(r.len(), 52);
        for (i, &ri) in r.iter().enumerate() {
            let n = i as i64 + 4;
            let mut acc = C64::new(0.0, 0.0);
            for m in 0..3 {
                for l in -4i64..=4 {
                    acc += g.tap(m, l) * y.data[m][(n - l) as usize];
                }
            }
            assert!((acc - ri).norm() < 1e-12);
        }
        let spike = SeparatorFilter::center_spike(3, 4, 1);
        assert_eq!(apply_filter(&spike, &y).unwrap(), y.data[1][4..56].to_vec());
        assert!(apply_filter(&SeparatorFilter::zeros(3, 30), &y).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let y = random_signal(2, 200, 3);
        let g = random_filter(2, 3, 4);
        for freqs in [None, Some(&[0.07, -0.21][..])] {
            let ev = CostEvaluator::new(&y, 3, freqs.unwrap_or(&[])).unwrap();
            let grad = cost_gradient(&g, &y, freqs).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            for _ in 0..10 {
                let d = random_filter(2, 3, rng.random());
                let h = 1e-6;
                let fd = (ev.cost(&g.axpy(h, &d)).unwrap() - ev.cost(&g.axpy(-h, &d)).unwrap()) / (2.0 * h);
                let an = 2.0 * grad.real_dot(&d);
                assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "{fd} vs {an}");
            }
        }
    }

    #[test]
    fn minimize_is_monotone_and_stops_at_optimum() {
        let y = random_signal(2, 300, 6);
        let g0 = SeparatorFilter::default_init(&y, 2);
        let res = minimize(&g0, &y, &CostKind::Godard, &MinimizeOptions { max_iter: 200, ..Default::default() }).unwrap();
        for w in res.trace.windows(2) {
            assert!(w[1].cost <= w[0].cost);
        }
        // Unit-modulus output from a spike is already optimal.
        let u: Vec<C64> = (0..100).map(|k| C64::from_polar(1.0, 0.3 * k as f64)).collect();
        let y1 = MultichannelSignal::new(vec![u], 1.0).unwrap();
        let g = SeparatorFilter::center_spike(1, 2, 0);
        let res = minimize(&g, &y1, &CostKind::Godard, &MinimizeOptions::default()).unwrap();
        assert!(res.iterations <= 1);
        assert!(res.final_cost() < 1e-20);
        assert!(minimize(&SeparatorFilter::zeros(1, 2), &y1, &CostKind::Godard, &MinimizeOptions::default()).is_err());
    }

    #[test]
    fn expansion_simple_values() {
        let terms = ExpansionTerms {
            norms_sq: vec![1.0 / 1.3],
            beta: vec![1.3],
            beta_moment: vec![1.3],
            beta_prime: vec![1.0],
            c4: vec![-2.0],
            l: vec![vec![0.0]],
            l_prime: vec![vec![0.0]],
            sets: CyclicFrequencySets::default(),
        };
        assert!((expansion_eval(&terms, &CostKind::Godard).unwrap() - (1.0 - 1.0 / 1.3)).abs() < 1e-15);
        let zero = ExpansionTerms { norms_sq: vec![0.0], ..terms.clone() };
        assert_eq!(expansion_eval(&zero, &CostKind::Godard).unwrap(), 1.0);
        let broken = ExpansionTerms { norms_sq: vec![0.0, 1.0], ..terms };
        assert!(matches!(expansion_eval(&broken, &CostKind::Godard), Err(Error::Config(_))));
    }

    #[test]
    fn unit_modulus_beta_is_one() {
        let x: Vec<C64> = (0..1000).map(|k| C64::from_polar(1.0, 0.77 * k as f64 * k as f64)).collect();
        let s = FilteredSource::from_contribution(&x, 0, Modulation::CircularQpsk, 0.3, 0.0, None);
        let t = measure_terms(&[s]).unwrap();
        assert!((t.beta_moment[0] - 1.0).abs() < 1e-12);
        assert_eq!(t.beta[0], t.beta_prime[0]);
    }

    #[test]
    fn line_polynomial_matches_direct_cost() {
        let y = random_signal(3, 200, 11);
        let g = random_filter(3, 2, 12);
        let d = random_filter(3, 2, 13);
        let r = apply_filter(&g, &y).unwrap();
        let u = apply_filter(&d, &y).unwrap();
        for sf in [vec![], vec![0.13, -0.2]] {
            let ev = CostEvaluator::new(&y, 2, &sf).unwrap();
            let p = ev.line_polynomial(&r, &u);
            for s in [-1.3, 0.0, 0.4, 2.5] {
                let direct = ev.cost(&g.axpy(s, &d)).unwrap();
                assert!((poly_eval(&p, s) - direct).abs() < 1e-10 * direct.abs().max(1.0));
            }
        }
    }

    #[test]
    fn cubic_roots_are_roots() {
        for (a, b, c, d) in [(1.0, -6.0, 11.0, -6.0), (2.0, 0.0, 1.0, 5.0), (0.0, 1.0, -3.0, 2.0), (0.0, 0.0, 2.0, -1.0)] {
            let roots = cubic_roots(a, b, c, d);
            assert!(!roots.is_empty());
            for x in roots {
                assert!((((a * x + b) * x + c) * x + d).abs() < 1e-9, "{x}");
            }
        }
        let r = cubic_roots(1.0, -6.0, 11.0, -6.0);
        assert_eq!(r.len(), 3);
        assert_eq!(best_step(&[1.0, -4.0, 2.0, 0.0, 0.0]), Some(1.0));
        assert_eq!(best_step(&[1.0, 1.0, 1.0, 0.0, -1.0]), None);
    }
}
