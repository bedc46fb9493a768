//! Variational characterisation of `beta_min`, `eta_min`, `beta'_min` and
//! `beta_1,min` over band-limited functions, and the sufficient separation
//! conditions built from them.
//!
//! A band-limited `f_a` is represented by a piecewise-constant spectrum on
//! `P` cells of width `h = 1/(Q T)` covering the band. For such spectra every
//! integral of the objectives has an exact finite expression:
//!
//! * `f(t) = h sinc(h t) p(t)` with `p(t) = sum_j c_j exp(2 i pi nu_j t)`,
//! * the quadratic integrals are finite sums over the cells,
//! * `int |f|^4 = h^4 int_0^Q |p|^4 (2 + cos 2 pi h t)/3 dt`, using
//!   `sum_k sinc^4(x + k) = (2 + cos 2 pi x)/3`, and the integrand is a
//!   trigonometric polynomial, so a rectangle rule on enough points is exact.
//!
//! All computations use `T = 1`; the objectives do not depend on `T`.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Default number of spectral cells per `1/T`.
pub const DEFAULT_CELLS_PER_UNIT: usize = 200;

/// Piecewise-constant spectrum on the band `[-(1+gamma)/2T, (1+gamma)/2T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandlimitedFunction {
    pub symbol_period: f64,
    pub gamma: f64,
    /// Cells per `1/T`; the cell width is `1/(Q T)`.
    pub cells_per_unit: usize,
    /// `f^(nu_j)` on cell `j`, centred at `nu_j = (j - P/2 + 1/2) / (Q T)`.
    pub values: Vec<C64>,
}

/// Number of cells for a band. Always even so that grids for increasing
/// `gamma` are nested and symmetric about zero.
pub fn cell_count(gamma: f64, cells_per_unit: usize) -> usize {
    let w = (1.0 + gamma) * cells_per_unit as f64;
    2 * ((w + 1e-9) / 2.0).floor() as usize
}

impl BandlimitedFunction {
    pub fn new(gamma: f64, cells_per_unit: usize, values: Vec<C64>) -> Result<Self> {
        check_gamma(gamma)?;
        let p = cell_count(gamma, cells_per_unit);
        if values.len() != p {
            return Err(Error::Domain(format!("expected {p} spectral cells, got {}", values.len())));
        }
        Ok(BandlimitedFunction { symbol_period: 1.0, gamma, cells_per_unit, values })
    }

    /// `f^ = 1` on the whole band.
    pub fn brick_wall(gamma: f64, cells_per_unit: usize) -> Result<Self> {
        let p = cell_count(gamma, cells_per_unit);
        Self::new(gamma, cells_per_unit, vec![C64::new(1.0, 0.0); p])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Cell centres in Hz.
    pub fn freqs(&self) -> Vec<f64> {
        let p = self.values.len() as f64;
        let h = 1.0 / (self.cells_per_unit as f64 * self.symbol_period);
        (0..self.values.len()).map(|j| (j as f64 - p / 2.0 + 0.5) * h).collect()
    }

    pub fn scaled(&self, c: C64) -> Self {
        BandlimitedFunction { values: self.values.iter().map(|v| v * c).collect(), ..self.clone() }
    }

    /// Embeds the function into the (larger or equal) band of `gamma`.
    pub fn embed(&self, gamma: f64) -> Result<Self> {
        let p = cell_count(gamma, self.cells_per_unit);
        if p < self.values.len() {
            return Err(Error::Domain("cannot embed into a narrower band".into()));
        }
        let off = (p - self.values.len()) / 2;
        let mut values = vec![C64::new(0.0, 0.0); p];
        values[off..off + self.values.len()].copy_from_slice(&self.values);
        Self::new(gamma, self.cells_per_unit, values)
    }

    /// `f_a(t)` at time `t` (seconds), for checks against direct quadrature.
    pub fn eval_time(&self, t: f64) -> C64 {
        let h = 1.0 / (self.cells_per_unit as f64 * self.symbol_period);
        let x = h * t;
        let sinc = if x.abs() < 1e-15 { 1.0 } else { (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x) };
        let p: C64 = self
            .freqs()
            .iter()
            .zip(&self.values)
            .map(|(nu, c)| c * C64::from_polar(1.0, 2.0 * std::f64::consts::PI * nu * t))
            .sum();
        p * (h * sinc)
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Domain(format!("excess bandwidth must lie in [0, 1], got {gamma}")));
    }
    Ok(())
}

/// The integrals entering the objectives (with `T = 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integrals {
    /// `int |f|^2`
    pub n: f64,
    /// `int |f|^4`
    pub f4: f64,
    /// `int f^2`
    pub s0: C64,
    /// `int |f|^2 exp(-2 i pi t)`
    pub a1: C64,
    /// `int f^2 exp(-2 i pi t)`
    pub b_plus: C64,
    /// `int f^2 exp(+2 i pi t)`
    pub b_minus: C64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    /// `beta_min`
    Phi,
    /// `beta'_min`
    PhiPrime,
    /// `eta_min`: only the cumulant term.
    KurtosisOnly,
    /// `beta_1,min`: `Phi` over real-valued `f_a`.
    PhiRealConstrained,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Phi => "beta_min",
            Objective::PhiPrime => "beta_prime_min",
            Objective::KurtosisOnly => "eta_min",
            Objective::PhiRealConstrained => "beta1_min",
        }
    }
}

/// Exact evaluator for a fixed cell count.
struct Engine {
    p: usize,
    q: usize,
    h: f64,
    mt: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    weights: Vec<f64>,
}

impl Engine {
    fn new(p: usize, q: usize) -> Self {
        // |p|^4 w is a trigonometric polynomial of degree <= 2P - 1 in units
        // of h; more than 2(2P - 1) points make the rectangle rule exact.
        let mt = (4 * p).next_power_of_two().max(8);
        let mut planner = FftPlanner::new();
        let weights = (0..mt).map(|m| (2.0 + (2.0 * std::f64::consts::PI * m as f64 / mt as f64).cos()) / 3.0).collect();
        Engine { p, q, h: 1.0 / q as f64, mt, fwd: planner.plan_fft_forward(mt), inv: planner.plan_fft_inverse(mt), weights }
    }

    fn get(c: &[C64], j: isize) -> C64 {
        if j < 0 || j as usize >= c.len() {
            C64::new(0.0, 0.0)
        } else {
            c[j as usize]
        }
    }

    fn samples(&self, c: &[C64]) -> Vec<C64> {
        let mut buf = vec![C64::new(0.0, 0.0); self.mt];
        buf[..self.p].copy_from_slice(c);
        self.inv.process(&mut buf);
        buf
    }

    fn integrals(&self, c: &[C64]) -> (Integrals, Vec<C64>) {
        let h = self.h;
        let p = self.p as isize;
        let q = self.q as isize;
        let n = h * c.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let mut s0 = C64::new(0.0, 0.0);
        let mut a1 = C64::new(0.0, 0.0);
        let mut bp = C64::new(0.0, 0.0);
        let mut bm = C64::new(0.0, 0.0);
        for (j, &cj) in c.iter().enumerate() {
            let j = j as isize;
            s0 += cj * Self::get(c, p - 1 - j);
            a1 += cj * Self::get(c, j - q).conj();
            bp += cj * Self::get(c, p - 1 - j + q);
            bm += cj * Self::get(c, p - 1 - j - q);
        }
        let ps = self.samples(c);
        let f4 = h.powi(4)
            * (self.q as f64 / self.mt as f64)
            * ps.iter().zip(&self.weights).map(|(z, w)| z.norm_sqr().powi(2) * w).sum::<f64>();
        (Integrals { n, f4, s0: s0 * h, a1: a1 * h, b_plus: bp * h, b_minus: bm * h }, ps)
    }

    /// Objective value and its derivative with respect to `conj(c)`.
    fn eval(&self, c: &[C64], obj: Objective, kappa: f64, grad: bool) -> (f64, Vec<C64>) {
        let (it, ps) = self.integrals(c);
        let n2 = it.n * it.n;
        let mut quad = 0.0;
        let (w_a1, w_s0, w_b) = match obj {
            Objective::KurtosisOnly => (0.0, 0.0, 0.0),
            Objective::PhiPrime => (4.0, 0.0, 1.0),
            Objective::Phi | Objective::PhiRealConstrained => (4.0, 1.0, 1.0),
        };
        quad += w_a1 * it.a1.norm_sqr() + w_s0 * it.s0.norm_sqr() + w_b * (it.b_plus.norm_sqr() + it.b_minus.norm_sqr());
        let constant = if obj == Objective::KurtosisOnly { 0.0 } else { 2.0 };
        let value = kappa * it.f4 / n2 + constant + quad / n2;
        if !grad {
            return (value, Vec::new());
        }

        let h = self.h;
        let p = self.p as isize;
        let q = self.q as isize;
        // d f4 / d conj(c_j)
        let mut buf: Vec<C64> = ps.iter().zip(&self.weights).map(|(z, w)| z * (2.0 * z.norm_sqr() * w)).collect();
        self.fwd.process(&mut buf);
        let f4_scale = h.powi(4) * (self.q as f64 / self.mt as f64);
        let numer = kappa * it.f4 + quad;
        let mut g = Vec::with_capacity(self.p);
        for (k, &ck) in c.iter().enumerate() {
            let k = k as isize;
            let d_f4 = buf[k as usize] * f4_scale;
            let d_a1 = (it.a1.conj() * Self::get(c, k + q) + it.a1 * Self::get(c, k - q)) * h;
            let d_s0 = it.s0 * Self::get(c, p - 1 - k).conj() * (2.0 * h);
            let d_bp = it.b_plus * Self::get(c, p - 1 - k + q).conj() * (2.0 * h);
            let d_bm = it.b_minus * Self::get(c, p - 1 - k - q).conj() * (2.0 * h);
            let d_quad = d_a1 * w_a1 + d_s0 * w_s0 + (d_bp + d_bm) * w_b;
            let d_n = ck * h;
            g.push((d_f4 * kappa + d_quad) / n2 - d_n * (2.0 * numer / (n2 * it.n)));
        }
        (value, g)
    }
}

/// All six integrals of a band-limited function.
pub fn integrals(f: &BandlimitedFunction) -> Result<Integrals> {
    let engine = Engine::new(f.values.len(), f.cells_per_unit);
    let (it, _) = engine.integrals(&f.values);
    if !(it.n > 0.0) {
        return Err(Error::Domain("band-limited function is identically zero".into()));
    }
    Ok(it)
}

fn objective_value(f: &BandlimitedFunction, kappa: f64, obj: Objective) -> Result<f64> {
    if f.values.iter().all(|z| *z == C64::new(0.0, 0.0)) {
        return Err(Error::Domain("band-limited function is identically zero".into()));
    }
    let engine = Engine::new(f.values.len(), f.cells_per_unit);
    Ok(engine.eval(&f.values, obj, kappa, false).0)
}

/// `kappa T int|f|^4 / N^2 + 2 + 4|A_1|^2/N^2 + |S_0|^2/N^2 + |B_+|^2/N^2 + |B_-|^2/N^2`.
pub fn phi(f: &BandlimitedFunction, kappa: f64) -> Result<f64> {
    objective_value(f, kappa, Objective::Phi)
}

/// `phi` without the `|int f^2|^2 / N^2` term.
pub fn phi_prime(f: &BandlimitedFunction, kappa: f64) -> Result<f64> {
    objective_value(f, kappa, Objective::PhiPrime)
}

/// `kappa T int|f|^4 / N^2`.
pub fn kurtosis_term(f: &BandlimitedFunction, kappa: f64) -> Result<f64> {
    objective_value(f, kappa, Objective::KurtosisOnly)
}

pub fn evaluate(f: &BandlimitedFunction, kappa: f64, obj: Objective) -> Result<f64> {
    let v = objective_value(f, kappa, if obj == Objective::PhiRealConstrained { Objective::Phi } else { obj })?;
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationalOptions {
    pub cells_per_unit: usize,
    /// Random restarts on top of the deterministic starting points.
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stationarity tolerance on the scale-free gradient `|g| |c|`.
    pub tol: f64,
}

impl Default for VariationalOptions {
    fn default() -> Self {
        VariationalOptions { cells_per_unit: DEFAULT_CELLS_PER_UNIT, restarts: 8, seed: 0x5eed, max_iter: 4000, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalResult {
    pub objective: Objective,
    pub value: f64,
    pub argmin: BandlimitedFunction,
    /// Number of starting points tried.
    pub restarts: usize,
    pub converged: bool,
}

/// Projection onto spectra of real-valued functions, `c_{P-1-j} = conj(c_j)`.
fn project_real(v: &mut [C64]) {
    let p = v.len();
    for j in 0..p / 2 {
        let a = v[j];
        let b = v[p - 1 - j];
        let m = (a + b.conj()) * 0.5;
        v[j] = m;
        v[p - 1 - j] = m.conj();
    }
}

fn normalize(c: &mut [C64], h: f64) {
    let n = (h * c.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt();
    if n > 0.0 {
        c.iter_mut().for_each(|z| *z /= n);
    }
}

struct Descent {
    value: f64,
    c: Vec<C64>,
    converged: bool,
}

fn dot(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// L-BFGS over the real and imaginary parts of the cell values. The real
/// gradient is `2 * dPhi/dconj(c)` componentwise.
fn lbfgs(engine: &Engine, obj: Objective, kappa: f64, start: Vec<C64>, opts: &VariationalOptions) -> Descent {
    const MEMORY: usize = 12;
    let real = obj == Objective::PhiRealConstrained;
    let eval_obj = if real { Objective::Phi } else { obj };
    let grad_of = |c: &[C64]| {
        let (v, mut g) = engine.eval(c, eval_obj, kappa, true);
        g.iter_mut().for_each(|z| *z *= 2.0);
        if real {
            project_real(&mut g);
        }
        (v, g)
    };
    let mut c = start;
    if real {
        project_real(&mut c);
    }
    normalize(&mut c, engine.h);
    let (mut f, mut g) = grad_of(&c);
    let mut hist: Vec<(Vec<C64>, Vec<C64>, f64)> = Vec::new();
    let mut converged = false;
    let mut stall = 0;
    for _ in 0..opts.max_iter {
        let cn = dot(&c, &c).sqrt();
        let gn = dot(&g, &g).sqrt();
        if !f.is_finite() {
            break;
        }
        if gn * cn < opts.tol {
            converged = true;
            break;
        }
        // Two-loop recursion.
        let mut d: Vec<C64> = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &d);
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= yi * a);
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.last() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|di| *di *= gamma);
        } else {
            let scale = 0.1 * cn / gn.max(1e-300);
            d.iter_mut().for_each(|di| *di *= scale);
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += si * (a - b));
        }
        d.iter_mut().for_each(|di| *di = -*di);
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            hist.clear();
            let scale = 0.1 * cn / gn.max(1e-300);
            d = g.iter().map(|z| -z * scale).collect();
            slope = dot(&g, &d);
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<C64> = c.iter().zip(&d).map(|(x, y)| x + y * t).collect();
            let (fc, gc) = grad_of(&cand);
            if fc.is_finite() && fc <= f + 1e-4 * t * slope {
                accepted = Some((cand, fc, gc));
                break;
            }
            t *= 0.5;
        }
        let Some((mut cand, fc, gc)) = accepted else {
            converged = true;
            break;
        };
        let s: Vec<C64> = cand.iter().zip(&c).map(|(a, b)| a - b).collect();
        let y: Vec<C64> = gc.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-16 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            hist.push((s, y, 1.0 / sy));
            if hist.len() > MEMORY {
                hist.remove(0);
            }
        }
        let decrease = f - fc;
        // Keep the scale-free iterate well conditioned.
        let norm = (engine.h * cand.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt();
        let (fc, gc) = if !(0.5..=2.0).contains(&norm) {
            normalize(&mut cand, engine.h);
            hist.clear();
            grad_of(&cand)
        } else {
            (fc, gc)
        };
        c = cand;
        f = fc;
        g = gc;
        if decrease <= 1e-15 * f.abs().max(1.0) {
            stall += 1;
            if stall >= 8 {
                converged = true;
                break;
            }
        } else {
            stall = 0;
        }
    }
    normalize(&mut c, engine.h);
    let value = engine.eval(&c, eval_obj, kappa, false).0;
    Descent { value, c, converged }
}

fn starting_points(p: usize, obj: Objective, opts: &VariationalOptions, gamma: f64) -> Vec<Vec<C64>> {
    let mut starts = Vec::new();
    starts.push(vec![C64::new(1.0, 0.0); p]);
    // Raised-cosine taper across the band.
    starts.push(
        (0..p)
            .map(|j| {
                let x = (j as f64 + 0.5) / p as f64;
                C64::new((std::f64::consts::PI * x).sin(), 0.0)
            })
            .collect(),
    );
    if obj != Objective::PhiRealConstrained {
        // One-sided spectrum: makes int f^2 vanish.
        starts.push((0..p).map(|j| C64::new(if j >= p / 2 { 1.0 } else { 0.0 }, 0.0)).collect());
        // Frequency-shifted taper.
        starts.push(
            (0..p)
                .map(|j| {
                    let x = (j as f64 + 0.5) / p as f64;
                    C64::new((std::f64::consts::PI * x).sin().powi(2) * (1.0 + x), 0.0)
                })
                .collect(),
        );
    }
    let seed = opts.seed ^ (gamma.to_bits().rotate_left(17)) ^ (obj as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..opts.restarts {
        starts.push(
            (0..p)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    C64::new(re, im)
                })
                .collect(),
        );
    }
    starts
}

/// Minimizes the chosen objective over band-limited functions.
pub fn minimize_objective(obj: Objective, gamma: f64, kappa: f64, opts: &VariationalOptions) -> Result<VariationalResult> {
    minimize_with_start(obj, gamma, kappa, opts, None)
}

/// As [`minimize_objective`], additionally descending from `warm` (embedded
/// into the band of `gamma`).
pub fn minimize_with_start(
    obj: Objective,
    gamma: f64,
    kappa: f64,
    opts: &VariationalOptions,
    warm: Option<&BandlimitedFunction>,
) -> Result<VariationalResult> {
    check_gamma(gamma)?;
    if !kappa.is_finite() {
        return Err(Error::Domain("kurtosis must be finite".into()));
    }
    if opts.cells_per_unit < 32 || cell_count(gamma, opts.cells_per_unit) < 64 {
        return Err(Error::Config("at least 64 spectral cells are required".into()));
    }
    if opts.restarts < 4 {
        return Err(Error::Config("at least 4 random restarts are required".into()));
    }
    let p = cell_count(gamma, opts.cells_per_unit);
    let engine = Engine::new(p, opts.cells_per_unit);
    let mut starts = starting_points(p, obj, opts, gamma);
    if let Some(w) = warm {
        if w.cells_per_unit != opts.cells_per_unit {
            return Err(Error::Config("warm start uses a different cell width".into()));
        }
        starts.insert(0, w.embed(gamma)?.values);
    }
    let n_starts = starts.len();
    let mut best: Option<Descent> = None;
    for s in starts {
        let d = lbfgs(&engine, obj, kappa, s, opts);
        if d.value.is_finite() && best.as_ref().is_none_or(|b| d.value < b.value) {
            best = Some(d);
        }
    }
    let best = best.ok_or_else(|| Error::Numerical { message: "all restarts diverged".into(), trace: Vec::new() })?;
    Ok(VariationalResult {
        objective: obj,
        value: best.value,
        argmin: BandlimitedFunction::new(gamma, opts.cells_per_unit, best.c)?,
        restarts: n_starts,
        converged: best.converged,
    })
}

/// Minimizes along an increasing `gamma` grid, warm-starting each point from
/// the previous argmin. Since the bands are nested this makes the computed
/// curve nonincreasing.
pub fn minimize_curve(obj: Objective, gammas: &[f64], kappa: f64, opts: &VariationalOptions) -> Result<Vec<VariationalResult>> {
    let mut out: Vec<VariationalResult> = Vec::with_capacity(gammas.len());
    for (i, &g) in gammas.iter().enumerate() {
        if i > 0 && g < gammas[i - 1] {
            return Err(Error::Config("gamma grid must be nondecreasing".into()));
        }
        let warm = out.last().map(|r| &r.argmin);
        out.push(minimize_with_start(obj, g, kappa, opts, warm)?);
    }
    Ok(out)
}

/// One inequality: `holds` iff `margin > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub holds: bool,
    pub margin: f64,
}

impl Check {
    fn positive(margin: f64) -> Self {
        let margin = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
        Check { holds: margin > 0.0, margin }
    }

    fn both(a: Check, b: Check) -> Check {
        Check { holds: a.holds && b.holds, margin: a.margin.min(b.margin) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub k: usize,
    /// `beta_min < 2`.
    pub separation_distinct: Check,
    /// `-3 beta + 5 + eta > 0`.
    pub godard_pair_first: Check,
    /// `2(beta-1)beta - 4(1 - sqrt(2(beta-1) - 1 - eta)/2)^2 < 0`.
    pub godard_pair_second: Check,
    pub godard_pair: Check,
    /// `beta'_min < 1/2`.
    pub modified_half: Check,
    pub modified_pair_first: Check,
    pub modified_pair_second: Check,
    pub modified_pair: Check,
    /// `beta_* = K(beta'_min - 1/2) + 1/2`.
    pub beta_star: f64,
    /// `lambda_*` with `beta_* = eta_min + 2 + lambda_*^2`.
    pub lambda_star: f64,
    /// `lambda_*` inside `(0, sqrt(3/2))`.
    pub lambda_admissible: Check,
    /// `K(beta' - 1/2) + 1/2 <= beta_* <= 4 + eta - beta'`.
    pub final_first: Check,
    /// `beta'(beta_* + (K-2)/2) - (K-1)(2 - sqrt(3/2 (beta_* - 2 - eta)))^2 < 0`.
    pub final_second: Check,
    pub final_pair: Check,
    /// Minimum of the general lower bound over its stationary points with
    /// `(P1, P2) != (1, 0)`, minus `1 - 1/beta'_min`.
    pub stationary: Check,
}

fn sqrt_or_nan(x: f64) -> f64 {
    if x >= 0.0 {
        x.sqrt()
    } else {
        f64::NAN
    }
}

/// Evaluates every sufficient condition exactly as written; a square root of
/// a negative number makes the corresponding check fail with margin `-inf`.
pub fn check_conditions(beta_min: f64, eta_min: f64, beta_prime_min: f64, k: usize) -> ConditionReport {
    let b = beta_min;
    let e = eta_min;
    let bp = beta_prime_min;
    let kf = k as f64;
    let s15 = 1.5f64.sqrt();

    let separation_distinct = Check::positive(2.0 - b);
    let godard_pair_first = Check::positive(-3.0 * b + 5.0 + e);
    let godard_pair_second =
        Check::positive(-(2.0 * (b - 1.0) * b - 4.0 * (1.0 - 0.5 * sqrt_or_nan(2.0 * (b - 1.0) - 1.0 - e)).powi(2)));
    let modified_half = Check::positive(0.5 - bp);
    let modified_pair_first = Check::positive(e + 3.0 - (kf + 1.0) * (bp - 0.5));
    let modified_pair_second =
        Check::positive(-(bp * (kf * bp - 0.5) - (kf - 1.0) * (2.0 - s15 * sqrt_or_nan(kf * (bp - 0.5) - (e + 1.5))).powi(2)));

    let beta_star = kf * (bp - 0.5) + 0.5;
    let lambda_sq = beta_star - e - 2.0;
    let lambda_star = sqrt_or_nan(lambda_sq);
    let lambda_admissible = Check::positive(lambda_star.min(s15 - lambda_star));
    let lo = kf * (bp - 0.5) + 0.5 - beta_star;
    let hi = 4.0 + e - bp - beta_star;
    // The lower bound is an equality by construction; only its sign matters.
    let final_first = Check { holds: lo <= 0.0 && hi >= 0.0, margin: if lo <= 0.0 { hi } else { -lo } };
    let final_second = Check::positive(
        -(bp * (beta_star + 0.5 * (kf - 2.0)) - (kf - 1.0) * (2.0 - sqrt_or_nan(1.5 * (beta_star - 2.0 - e))).powi(2)),
    );
    let stationary = Check::positive(stationary_margin(bp, beta_star, lambda_star, k));

    ConditionReport {
        k,
        separation_distinct,
        godard_pair_first,
        godard_pair_second,
        godard_pair: Check::both(godard_pair_first, godard_pair_second),
        modified_half,
        modified_pair_first,
        modified_pair_second,
        modified_pair: Check::both(modified_pair_first, modified_pair_second),
        beta_star,
        lambda_star,
        lambda_admissible,
        final_first,
        final_second,
        final_pair: Check::both(final_first, final_second),
        stationary,
    }
}

/// Lowest value of the two-class lower bound over its admissible stationary
/// points `(P1, P2) != (1, 0)`, minus `1 - 1/beta'`.
fn stationary_margin(bp: f64, beta_star: f64, lambda: f64, k: usize) -> f64 {
    if !lambda.is_finite() || bp <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let c = 2.0 - 1.5f64.sqrt() * lambda;
    let target = 1.0 - 1.0 / bp;
    let mut best = f64::INFINITY;
    for p1 in 0..=k {
        for p2 in 0..=(k - p1) {
            if (p1, p2) == (0, 0) || (p1, p2) == (1, 0) {
                continue;
            }
            let (p1f, p2f) = (p1 as f64, p2 as f64);
            let a = bp + (2.0 - lambda * lambda) * (p1f - 1.0);
            let b = beta_star + 0.5 * (p2f - 1.0);
            let (t1, t2) = if p1 == 0 {
                (0.0, 1.0 / b)
            } else if p2 == 0 {
                (1.0 / a, 0.0)
            } else {
                let det = a * b - c * c * p1f * p2f;
                if det.abs() < 1e-300 {
                    continue;
                }
                ((b - c * p2f) / det, (a - c * p1f) / det)
            };
            if t1 < 0.0 || t2 < 0.0 || !t1.is_finite() || !t2.is_finite() {
                continue;
            }
            best = best.min(1.0 - p1f * t1 - p2f * t2);
        }
    }
    best - target
}

/// `beta' sum |f_k|^4 + 1/2 sum_{k1 != k2} |f_k1|^2 |f_k2|^2 - 2 sum |f_k|^2 + 1`.
pub fn lower_bound_m(norms_sq: &[f64], beta_prime_min: f64) -> Result<f64> {
    if norms_sq.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::Domain("norms must be non-negative".into()));
    }
    let s: f64 = norms_sq.iter().sum();
    let s2: f64 = norms_sq.iter().map(|x| x * x).sum();
    Ok(beta_prime_min * s2 + 0.5 * (s * s - s2) - 2.0 * s + 1.0)
}
