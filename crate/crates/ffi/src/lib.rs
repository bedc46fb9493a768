//! C ABI over the `cmasep` library.
//!
//! Objects cross the boundary as opaque handles created by `*_new`-style
//! functions and released by the matching `*_free`. Every fallible function
//! returns a [`CmasepStatus`]; the message of the last failure on the calling
//! thread is available from [`cmasep_last_error`]. Complex buffers are
//! interleaved `re, im` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cmasep::channel::MultichannelSignal;
use cmasep::costs::{apply_filter, minimize, CostEvaluator, CostKind, MinimizeOptions, SeparatorFilter};
use cmasep::deflation::{separate_all, DeflationOptions};
use cmasep::experiment::{run_experiment, summary_csv, trials_csv, ExperimentConfig};
use cmasep::variational::{minimize_objective, Objective, VariationalOptions};
use cmasep::{Error, C64};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmasepStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    EmptyInput = 4,
    Domain = 5,
    Coverage = 6,
    Config = 7,
    Numerical = 8,
    Io = 9,
    Panic = 10,
}

/// Multichannel observation (one row per sensor).
pub struct CmasepSignal(MultichannelSignal);

/// Separator filter with taps at lags `-L..=L` on every sensor.
pub struct CmasepFilter(SeparatorFilter);

/// Experiment configuration.
pub struct CmasepConfig(ExperimentConfig);

/// Result of a sequential separation.
pub struct CmasepSeparation {
    filters: Vec<SeparatorFilter>,
    outputs: Vec<Vec<C64>>,
    costs: Vec<f64>,
}

/// Objectives of the variational problem.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmasepObjective {
    Phi = 0,
    PhiPrime = 1,
    KurtosisOnly = 2,
    PhiRealConstrained = 3,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(CmasepStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::EmptyInput(_) => CmasepStatus::EmptyInput,
            Error::Domain(_) => CmasepStatus::Domain,
            Error::Coverage(_) => CmasepStatus::Coverage,
            Error::Config(_) => CmasepStatus::Config,
            Error::Numerical { .. } => CmasepStatus::Numerical,
            Error::Io(_) => CmasepStatus::Io,
        };
        Failure(code, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CmasepStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(CmasepStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CmasepStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CmasepStatus::Ok,
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            CmasepStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write_complex(src: &[C64], out: *mut f64, capacity: usize, len_out: *mut usize) -> Result<(), Failure> {
    if !len_out.is_null() {
        *len_out = src.len();
    }
    if capacity < src.len() {
        return Err(Failure(CmasepStatus::BufferTooSmall, format!("need room for {} complex values", src.len())));
    }
    if src.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(null("output buffer"));
    }
    let dst = std::slice::from_raw_parts_mut(out, 2 * src.len());
    for (d, z) in dst.chunks_exact_mut(2).zip(src) {
        d[0] = z.re;
        d[1] = z.im;
    }
    Ok(())
}

unsafe fn cost_kind(freqs: *const f64, n_freqs: usize) -> Result<CostKind, Failure> {
    let f = slice(freqs, n_freqs, "significant frequencies")?;
    Ok(if f.is_empty() { CostKind::Godard } else { CostKind::Modified(f.to_vec()) })
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn cmasep_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cmasep_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a signal from `n_sensors * len` interleaved complex samples, sensor
/// after sensor.
///
/// # Safety
/// `samples` must point to `2 * n_sensors * len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cmasep_signal_new(
    samples: *const f64,
    n_sensors: usize,
    len: usize,
    sample_period: f64,
    out: *mut *mut CmasepSignal,
) -> CmasepStatus {
    guard(|| {
        let total = n_sensors.checked_mul(len).and_then(|v| v.checked_mul(2)).ok_or_else(|| invalid("size overflow"))?;
        let raw = slice(samples, total, "samples")?;
        let data = raw
            .chunks(2 * len.max(1))
            .take(n_sensors)
            .map(|row| row.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect())
            .collect();
        put(out, CmasepSignal(MultichannelSignal::new(data, sample_period)?))
    })
}

/// # Safety
/// `signal` must come from [`cmasep_signal_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn cmasep_signal_free(signal: *mut CmasepSignal) {
    if !signal.is_null() {
        drop(Box::from_raw(signal));
    }
}

/// # Safety
/// `signal` must be a valid handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn cmasep_signal_len(signal: *const CmasepSignal) -> usize {
    signal.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `signal` must be a valid handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn cmasep_signal_n_sensors(signal: *const CmasepSignal) -> usize {
    signal.as_ref().map_or(0, |s| s.0.n_sensors())
}

/// Center-spike filter on the most powerful sensor.
///
/// # Safety
/// `signal` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cmasep_filter_default(
    signal: *const CmasepSignal,
    half_len: usize,
    out: *mut *mut CmasepFilter,
) -> CmasepStatus {
    guard(|| {
        let s = handle(signal, "signal")?;
        put(out, CmasepFilter(SeparatorFilter::default_init(&s.0, half_len)))
    })
}

/// Builds a filter from `n_sensors * (2 * half_len + 1)` interleaved taps,
/// sensor after sensor, lag `-L` first.
///
/// # Safety
/// `taps` must hold the stated number of doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cmasep_filter_new(
    taps: *const f64,
    n_sensors: usize,
    half_len: usize,
    out: *mut *mut CmasepFilter,
) -> CmasepStatus {
    guard(|| {
        let width = 2 * half_len + 1;
        let raw = slice(taps, 2 * n_sensors * width, "taps")?;
        let rows = raw.chunks(2 * width).map(|r| r.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect()).collect();
        put(out, CmasepFilter(SeparatorFilter::from_taps(rows)?))
    })
}

/// # Safety
/// `filter` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn cmasep_filter_free(filter: *mut CmasepFilter) {
    if !filter.is_null() {
        drop(Box::from_raw(filter));
    }
}

/// Copies the taps (layout of [`cmasep_filter_new`]); `capacity` counts
/// complex values and `n_out` receives the required count.
///
/// # Safety
/// `out` must hold `2 * capacity` doubles; `n_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn cmasep_filter_taps(
    filter: *const CmasepFilter,
    out: *mut f64,
    capacity: usize,
    n_out: *mut usize,
) -> CmasepStatus {
    guard(|| {
        let g = handle(filter, "filter")?;
        let flat: Vec<C64> = g.0.taps.iter().flatten().copied().collect();
        write_complex(&flat, out, capacity, n_out)
    })
}

/// Filter output `r(i)`, aligned with sample `i + L` of the signal.
///
/// # Safety
/// Handles must be valid; `out` must hold `2 * capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn cmasep_apply_filter(
    filter: *const CmasepFilter,
    signal: *const CmasepSignal,
    out: *mut f64,
    capacity: usize,
    n_out: *mut usize,
) -> CmasepStatus {
    guard(|| {
        let r = apply_filter(&handle(filter, "filter")?.0, &handle(signal, "signal")?.0)?;
        write_complex(&r, out, capacity, n_out)
    })
}

/// Godard cost, or the modified cost when `n_freqs > 0`.
///
/// # Safety
/// Handles must be valid; `freqs` must hold `n_freqs` doubles.
#[no_mangle]
pub unsafe extern "C" fn cmasep_cost(
    signal: *const CmasepSignal,
    filter: *const CmasepFilter,
    freqs: *const f64,
    n_freqs: usize,
    cost: *mut f64,
) -> CmasepStatus {
    guard(|| {
        let y = &handle(signal, "signal")?.0;
        let g = &handle(filter, "filter")?.0;
        let kind = cost_kind(freqs, n_freqs)?;
        let v = CostEvaluator::new(y, g.half_len, kind.sig_freqs())?.cost(g)?;
        *(cost.as_mut().ok_or_else(|| null("cost"))?) = v;
        Ok(())
    })
}

/// Steepest descent from `start`; the minimizer is returned as a new handle.
///
/// # Safety
/// Handles must be valid; `freqs` must hold `n_freqs` doubles; `final_cost`
/// may be null.
#[no_mangle]
pub unsafe extern "C" fn cmasep_minimize(
    signal: *const CmasepSignal,
    start: *const CmasepFilter,
    freqs: *const f64,
    n_freqs: usize,
    max_iter: usize,
    out: *mut *mut CmasepFilter,
    final_cost: *mut f64,
) -> CmasepStatus {
    guard(|| {
        let y = &handle(signal, "signal")?.0;
        let g0 = &handle(start, "start filter")?.0;
        let kind = cost_kind(freqs, n_freqs)?;
        let res = minimize(g0, y, &kind, &MinimizeOptions { max_iter, ..Default::default() })?;
        if let Some(c) = final_cost.as_mut() {
            *c = res.final_cost();
        }
        put(out, CmasepFilter(res.filter))
    })
}

/// Extracts `k` sources by deflation with separator half length `half_len`.
///
/// # Safety
/// `signal` and `out` must be valid; `freqs` must hold `n_freqs` doubles.
#[no_mangle]
pub unsafe extern "C" fn cmasep_separate(
    signal: *const CmasepSignal,
    k: usize,
    half_len: usize,
    freqs: *const f64,
    n_freqs: usize,
    seed: u64,
    out: *mut *mut CmasepSeparation,
) -> CmasepStatus {
    guard(|| {
        let y = &handle(signal, "signal")?.0;
        let kind = cost_kind(freqs, n_freqs)?;
        let opts = DeflationOptions { half_len, seed, ..Default::default() };
        let recs = separate_all(y, k, &kind, &opts)?;
        let sep = CmasepSeparation {
            costs: recs.iter().map(|r| r.final_cost).collect(),
            filters: recs.iter().map(|r| r.filter.clone()).collect(),
            outputs: recs.into_iter().map(|r| r.extracted).collect(),
        };
        put(out, sep)
    })
}

/// # Safety
/// `sep` must come from [`cmasep_separate`] or be null.
#[no_mangle]
pub unsafe extern "C" fn cmasep_separation_free(sep: *mut CmasepSeparation) {
    if !sep.is_null() {
        drop(Box::from_raw(sep));
    }
}

/// # Safety
/// `sep` must be a valid handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn cmasep_separation_count(sep: *const CmasepSeparation) -> usize {
    sep.as_ref().map_or(0, |s| s.filters.len())
}

/// Copies output stream `index` and its final cost.
///
/// # Safety
/// `sep` must be valid; `out` must hold `2 * capacity` doubles; `n_out` and
/// `final_cost` may be null.
#[no_mangle]
pub unsafe extern "C" fn cmasep_separation_stream(
    sep: *const CmasepSeparation,
    index: usize,
    out: *mut f64,
    capacity: usize,
    n_out: *mut usize,
    final_cost: *mut f64,
) -> CmasepStatus {
    guard(|| {
        let s = handle(sep, "separation")?;
        let r = s.outputs.get(index).ok_or_else(|| invalid(format!("stream {index} out of range")))?;
        if let Some(c) = final_cost.as_mut() {
            *c = s.costs[index];
        }
        write_complex(r, out, capacity, n_out)
    })
}

/// Filter of stream `index` as a new handle.
///
/// # Safety
/// `sep` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cmasep_separation_filter(
    sep: *const CmasepSeparation,
    index: usize,
    out: *mut *mut CmasepFilter,
) -> CmasepStatus {
    guard(|| {
        let s = handle(sep, "separation")?;
        let g = s.filters.get(index).ok_or_else(|| invalid(format!("stream {index} out of range")))?;
        put(out, CmasepFilter(g.clone()))
    })
}

/// Infimum of a variational objective at excess bandwidth `gamma`.
///
/// # Safety
/// `value` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cmasep_variational_min(
    objective: CmasepObjective,
    gamma: f64,
    kappa: f64,
    seed: u64,
    value: *mut f64,
) -> CmasepStatus {
    guard(|| {
        let obj = match objective {
            CmasepObjective::Phi => Objective::Phi,
            CmasepObjective::PhiPrime => Objective::PhiPrime,
            CmasepObjective::KurtosisOnly => Objective::KurtosisOnly,
            CmasepObjective::PhiRealConstrained => Objective::PhiRealConstrained,
        };
        let res = minimize_objective(obj, gamma, kappa, &VariationalOptions { seed, ..Default::default() })?;
        *(value.as_mut().ok_or_else(|| null("value"))?) = res.value;
        Ok(())
    })
}

/// Parses a TOML experiment configuration; null text gives the defaults.
///
/// # Safety
/// `toml` must be a NUL-terminated string or null; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cmasep_config_new(toml: *const c_char, out: *mut *mut CmasepConfig) -> CmasepStatus {
    guard(|| {
        let cfg = if toml.is_null() {
            ExperimentConfig::default()
        } else {
            let text = CStr::from_ptr(toml).to_str().map_err(|_| invalid("configuration is not UTF-8"))?;
            ExperimentConfig::from_toml(text)?
        };
        put(out, CmasepConfig(cfg))
    })
}

/// # Safety
/// `cfg` must come from [`cmasep_config_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn cmasep_config_free(cfg: *mut CmasepConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Overrides the seed and trial count (0 keeps the configured count).
///
/// # Safety
/// `cfg` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cmasep_config_set_run(cfg: *mut CmasepConfig, seed: u64, trials: usize) -> CmasepStatus {
    guard(|| {
        let c = cfg.as_mut().ok_or_else(|| null("config"))?;
        let mut next = c.0.clone();
        next.seed = seed;
        if trials > 0 {
            next.trials = trials;
        }
        next.validate()?;
        c.0 = next;
        Ok(())
    })
}

/// Runs the experiment and returns the per-trial and summary CSV tables as
/// strings to be released with [`cmasep_string_free`].
///
/// # Safety
/// `cfg` must be valid; both output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cmasep_run_experiment(
    cfg: *const CmasepConfig,
    trials_out: *mut *mut c_char,
    summary_out: *mut *mut c_char,
) -> CmasepStatus {
    guard(|| {
        let c = &handle(cfg, "config")?.0;
        if trials_out.is_null() || summary_out.is_null() {
            return Err(null("output string"));
        }
        let results = run_experiment(c)?;
        let to_c = |s: String| CString::new(s).map_err(|_| invalid("table contains NUL"));
        let t = to_c(trials_csv(c, &results))?;
        let s = to_c(summary_csv(c, &results))?;
        *trials_out = t.into_raw();
        *summary_out = s.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn cmasep_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
