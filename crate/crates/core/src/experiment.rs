//! Monte-Carlo drivers: simulated separation trials, variational curves and
//! frequency detection runs, all emitted as CSV tables.
//!
//! Every trial draws from its own ChaCha stream `(seed, trial)`, and trials
//! are collected in order, so outputs do not depend on scheduling.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{draw_channel, mix, symbol_range, ArrayGeometry, MixedSignal, MultichannelSignal, MultipathProfile};
use crate::costs::{apply_filter, CostKind, MinimizeOptions, SeparatorFilter};
use crate::cyclostats::{detect_sig_freqs, freq_distance, tally_detections, true_freq_sets, DetectOptions};
use crate::deflation::{separate_all, DeflationOptions, ExtractionRecord};
use crate::eval::{match_streams, ser, sinr, wiener_filter, StreamScore, TrialScore};
use crate::sigmodel::{gen_symbols_with_rng, Modulation, SourceSpec, SymbolSequence};
use crate::variational::{check_conditions, minimize_curve, Objective, VariationalOptions};
use crate::{Error, Result};

/// Bins used for every histogram table.
pub const HISTOGRAM_BINS: usize = 40;
/// Reference-scale counts, reported next to the desk-scale ones.
pub const REFERENCE_TRIALS: usize = 1000;
pub const REFERENCE_T_PERF: usize = 20000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// All sources share symbol period and carrier offset.
    Identical,
    /// Sources take the periods in `distinct_periods_us` and independent offsets.
    Distinct,
    /// Sources listed explicitly in `[[source]]` tables.
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(alias = "j", alias = "cma")]
    J,
    #[serde(alias = "jmod", alias = "Jprime", alias = "cmam")]
    Jmod,
    #[serde(alias = "wiener", alias = "mmse")]
    Wiener,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::J => "J",
            Method::Jmod => "Jmod",
            Method::Wiener => "Wiener",
        }
    }
}

/// One `[[source]]` table of a custom scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub kind: Modulation,
    pub symbol_period_us: f64,
    pub gamma: f64,
    /// Carrier offset; drawn per trial when absent.
    #[serde(default)]
    pub freq_offset_hz: Option<f64>,
    #[serde(default = "one")]
    pub power: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BetaminConfig {
    pub gammas: Vec<f64>,
    pub kappa: f64,
    /// Source count used in the pair conditions.
    pub k: usize,
    pub cells_per_unit: usize,
    pub restarts: usize,
}

impl Default for BetaminConfig {
    fn default() -> Self {
        BetaminConfig {
            gammas: (0..=10).map(|i| i as f64 / 10.0).collect(),
            kappa: -2.0,
            k: 3,
            cells_per_unit: crate::variational::DEFAULT_CELLS_PER_UNIT,
            restarts: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectConfig {
    pub lags: Vec<usize>,
    pub threshold_factor: f64,
    /// Frequency grid step; `None` means `1/M`.
    pub grid_step: Option<f64>,
    /// Matching tolerance in units of `1/M`.
    pub tolerance_bins: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        let d = DetectOptions::default();
        DetectConfig { lags: d.lags, threshold_factor: d.threshold_factor, grid_step: d.grid_step, tolerance_bins: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub k: usize,
    pub gamma: f64,
    /// Reference symbol period; also the period of every identical source.
    pub symbol_period_us: f64,
    pub distinct_periods_us: Vec<f64>,
    /// `T_ref / T_e`.
    pub oversampling: f64,
    pub profile: String,
    pub n_sensors: usize,
    pub f0_hz: f64,
    /// `inf` disables noise.
    pub es_n0_db: f64,
    pub t_obs_symbols: usize,
    pub t_perf_symbols: usize,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    /// Use detected instead of true significant frequencies for `Jmod`.
    pub detection: bool,
    pub half_len: usize,
    /// Sources to extract per trial; `None` means all.
    pub extract: Option<usize>,
    pub restarts: usize,
    pub max_iter: usize,
    pub compute_ser: bool,
    /// Carrier offsets are drawn in this fraction of the admissible range.
    pub offset_fraction: f64,
    #[serde(rename = "source")]
    pub sources: Vec<SourceConfig>,
    pub betamin: BetaminConfig,
    pub detect: DetectConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: Scenario::Distinct,
            k: 3,
            gamma: 0.5,
            symbol_period_us: 3.6,
            distinct_periods_us: vec![3.4, 3.6, 3.9],
            oversampling: 1.6,
            profile: "TU".into(),
            n_sensors: 5,
            f0_hz: 1e9,
            es_n0_db: 20.0,
            t_obs_symbols: 2000,
            t_perf_symbols: 5000,
            trials: 100,
            seed: 1,
            methods: vec![Method::J, Method::Jmod, Method::Wiener],
            detection: false,
            half_len: 8,
            extract: None,
            restarts: 1,
            max_iter: 2000,
            compute_ser: true,
            offset_fraction: 0.9,
            sources: Vec::new(),
            betamin: BetaminConfig::default(),
            detect: DetectConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn sample_period(&self) -> f64 {
        self.symbol_period_us * 1e-6 / self.oversampling
    }

    pub fn n_sources(&self) -> usize {
        match self.scenario {
            Scenario::Custom => self.sources.len(),
            _ => self.k,
        }
    }

    pub fn n_extract(&self) -> usize {
        self.extract.unwrap_or(self.n_sources())
    }

    fn obs_samples(&self) -> usize {
        (self.t_obs_symbols as f64 * self.oversampling).round() as usize
    }

    fn perf_samples(&self) -> usize {
        (self.t_perf_symbols as f64 * self.oversampling).round() as usize
    }

    /// Source descriptions with the offset set to zero where it is random.
    fn base_specs(&self) -> Result<Vec<(SourceSpec, Option<f64>)>> {
        let us = 1e-6;
        match self.scenario {
            Scenario::Identical => {
                let s = SourceSpec::new(Modulation::Bpsk, self.symbol_period_us * us, self.gamma, 0.0)?;
                Ok(vec![(s, None); self.k])
            }
            Scenario::Distinct => {
                if self.distinct_periods_us.len() < self.k {
                    return Err(Error::Config(format!(
                        "distinct scenario needs {} symbol periods, got {}",
                        self.k,
                        self.distinct_periods_us.len()
                    )));
                }
                self.distinct_periods_us[..self.k]
                    .iter()
                    .map(|&t| Ok((SourceSpec::new(Modulation::Bpsk, t * us, self.gamma, 0.0)?, None)))
                    .collect()
            }
            Scenario::Custom => self
                .sources
                .iter()
                .map(|s| {
                    let spec = SourceSpec::new(s.kind, s.symbol_period_us * us, s.gamma, s.freq_offset_hz.unwrap_or(0.0))?
                        .with_power(s.power);
                    spec.validate()?;
                    Ok((spec, s.freq_offset_hz))
                })
                .collect(),
        }
    }

    /// Largest admissible `|Delta f|` for a source.
    fn offset_margin(&self, spec: &SourceSpec) -> f64 {
        0.5 / self.sample_period() - spec.half_band_hz()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.trials == 0 {
            return fail("trials must be at least 1");
        }
        if self.n_sources() == 0 {
            return fail("at least one source is required");
        }
        if self.scenario != Scenario::Custom && !self.sources.is_empty() {
            return fail("[[source]] tables are only allowed with scenario = \"custom\"");
        }
        if !(self.symbol_period_us > 0.0) || !(self.oversampling > 0.0) {
            return fail("symbol period and oversampling must be positive");
        }
        if self.n_sensors == 0 || !(self.f0_hz > 0.0) {
            return fail("the array needs sensors and a positive carrier");
        }
        if self.es_n0_db.is_nan() || self.es_n0_db == f64::NEG_INFINITY {
            return fail("es_n0_db must be a number or inf");
        }
        if self.t_obs_symbols == 0 || self.t_perf_symbols < self.t_obs_symbols {
            return fail("need 0 < t_obs_symbols <= t_perf_symbols");
        }
        if self.methods.is_empty() {
            return fail("at least one method is required");
        }
        if self.n_extract() == 0 || self.n_extract() > self.n_sources() {
            return fail("extract must lie between 1 and the number of sources");
        }
        if self.obs_samples() <= 2 * self.half_len + 1 {
            return fail("observation too short for the separator length");
        }
        if !(0.0..=1.0).contains(&self.offset_fraction) {
            return fail("offset_fraction must lie in [0, 1]");
        }
        if self.restarts == 0 {
            return fail("restarts must be at least 1");
        }
        MultipathProfile::builtin(&self.profile)?;
        ArrayGeometry::circular(self.n_sensors, self.f0_hz)?;
        for (spec, offset) in self.base_specs()? {
            let margin = self.offset_margin(&spec);
            if margin <= 0.0 {
                return fail("sampling rate violates the band-limited sampling condition");
            }
            if offset.is_some_and(|f| f.abs() >= margin) {
                return fail("a fixed carrier offset violates the band-limited sampling condition");
            }
        }
        Ok(())
    }
}

/// Everything drawn for one trial.
#[derive(Debug, Clone)]
pub struct Trial {
    pub specs: Vec<SourceSpec>,
    pub symbols: Vec<SymbolSequence>,
    /// Record of `T_perf` symbols; the observation is its first `T_obs`.
    pub perf: MixedSignal,
    pub obs: MultichannelSignal,
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64 + 1);
    rng
}

/// Draws offsets, symbols, channels and noise for trial `index`.
pub fn draw_trial(cfg: &ExperimentConfig, index: usize) -> Result<Trial> {
    cfg.validate()?;
    let mut rng = trial_rng(cfg.seed, index);
    let te = cfg.sample_period();
    let base = cfg.base_specs()?;
    let mut specs = Vec::with_capacity(base.len());
    let mut common: Option<f64> = None;
    for (spec, fixed) in base {
        let df = match fixed {
            Some(f) => f,
            None => {
                let m = cfg.offset_margin(&spec) * cfg.offset_fraction;
                let mut draw = || -> f64 {
                    if m > 0.0 {
                        Uniform::new(-m, m).expect("m > 0").sample(&mut rng)
                    } else {
                        0.0
                    }
                };
                if cfg.scenario == Scenario::Identical {
                    *common.get_or_insert_with(draw)
                } else {
                    draw()
                }
            }
        };
        specs.push(SourceSpec { freq_offset_hz: df, ..spec });
    }
    let profile = MultipathProfile::builtin(&cfg.profile)?;
    let geom = ArrayGeometry::circular(cfg.n_sensors, cfg.f0_hz)?;
    let channels: Vec<_> = specs.iter().map(|_| draw_channel(&profile, &geom, &mut rng)).collect();
    let n_perf = cfg.perf_samples();
    let mut symbols = Vec::with_capacity(specs.len());
    for (spec, ch) in specs.iter().zip(&channels) {
        let (lo, hi) = symbol_range(spec, te, n_perf, ch.max_delay())?;
        symbols.push(gen_symbols_with_rng(spec.kind, (hi - lo) as usize, &mut rng)?.with_first_index(lo));
    }
    let pairs: Vec<_> = specs.iter().copied().zip(symbols.iter().cloned()).collect();
    let perf = mix(&pairs, &channels, te, n_perf, cfg.es_n0_db, &mut rng)?;
    let obs = perf.mixture.slice(0, cfg.obs_samples());
    Ok(Trial { specs, symbols, perf, obs })
}

/// Significant non-conjugate frequencies handed to the modified cost.
pub fn sig_freqs_for(cfg: &ExperimentConfig, trial: &Trial) -> Result<Vec<f64>> {
    if cfg.detection {
        let m = trial.obs.len();
        let step = cfg.detect.grid_step.unwrap_or(1.0 / m as f64);
        let found = detect_sig_freqs(&trial.obs, &cfg.detect.lags, step, cfg.detect.threshold_factor)?;
        Ok(found.into_iter().map(|d| d.freq).collect())
    } else {
        Ok(true_freq_sets(&trial.specs, cfg.sample_period()).i_cs)
    }
}

/// Per-trial outcome of every configured method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub methods: Vec<(Method, TrialScore)>,
    pub sig_freqs: Vec<f64>,
}

fn score_streams(cfg: &ExperimentConfig, trial: &Trial, filters: &[(SeparatorFilter, f64, usize)]) -> Result<Vec<StreamScore>> {
    let sinrs =
        filters.iter().map(|(g, _, _)| sinr(g, &trial.perf.contributions, &trial.perf.noise)).collect::<Result<Vec<_>>>()?;
    let assignment = match_streams(&sinrs)?;
    let mut out = Vec::with_capacity(filters.len());
    for (((g, cost, iterations), s), src) in filters.iter().zip(sinrs).zip(assignment) {
        let ser_value = if cfg.compute_ser {
            let r = apply_filter(g, &trial.perf.mixture)?;
            Some(ser(&r, g.half_len as i64, &trial.specs[src], cfg.sample_period(), &trial.symbols[src])?)
        } else {
            None
        };
        out.push(StreamScore {
            sinr_db: s,
            source: src,
            ser: ser_value,
            final_cost: *cost,
            iterations: *iterations,
            filter: g.clone(),
        });
    }
    Ok(out)
}

/// Runs every method on one trial.
pub fn run_trial(cfg: &ExperimentConfig, index: usize) -> Result<TrialResult> {
    let trial = draw_trial(cfg, index)?;
    let sig_freqs = sig_freqs_for(cfg, &trial)?;
    let dopts = DeflationOptions {
        half_len: cfg.half_len,
        restarts: cfg.restarts,
        seed: cfg.seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
        minimize: MinimizeOptions { max_iter: cfg.max_iter, ..Default::default() },
        ..Default::default()
    };
    // Wiener baselines are trained on the observation window.
    let n_obs = trial.obs.len();
    let wiener_filters =
        trial.perf.sources.iter().map(|s| wiener_filter(&trial.obs, &s[..n_obs], cfg.half_len)).collect::<Result<Vec<_>>>()?;
    let wiener_sinr_db = wiener_filters
        .iter()
        .enumerate()
        .map(|(k, g)| sinr(g, &trial.perf.contributions, &trial.perf.noise).map(|s| s[k]))
        .collect::<Result<Vec<_>>>()?;

    let mut methods = Vec::with_capacity(cfg.methods.len());
    for &m in &cfg.methods {
        let filters: Vec<_> = match m {
            Method::J | Method::Jmod => {
                let kind = if m == Method::J { CostKind::Godard } else { CostKind::Modified(sig_freqs.clone()) };
                let records: Vec<ExtractionRecord> = separate_all(&trial.obs, cfg.n_extract(), &kind, &dopts)?;
                records.into_iter().map(|r| (r.filter, r.final_cost, r.iterations)).collect()
            }
            Method::Wiener => wiener_filters.iter().map(|g| (g.clone(), f64::NAN, 0)).collect(),
        };
        let streams = score_streams(cfg, &trial, &filters)?;
        methods.push((m, TrialScore { streams, wiener_sinr_db: wiener_sinr_db.clone() }));
    }
    Ok(TrialResult { trial: index, methods, sig_freqs })
}

/// All trials of a configuration, in trial order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<TrialResult>> {
    cfg.validate()?;
    (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, t)).collect()
}

/// Fraction of trials in which the stream matched to each source reaches a
/// symbol error rate below `threshold`; unmatched sources count as failures.
pub fn ser_success_fraction(results: &[TrialResult], method: Method, n_sources: usize, threshold: f64) -> Vec<f64> {
    let mut ok = vec![0usize; n_sources];
    let mut total = 0usize;
    for r in results {
        let Some((_, score)) = r.methods.iter().find(|(m, _)| *m == method) else { continue };
        total += 1;
        for s in &score.streams {
            if s.ser.is_some_and(|e| e < threshold) && s.source < n_sources {
                ok[s.source] += 1;
            }
        }
    }
    ok.iter().map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 }).collect()
}

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.6}")
    }
}

fn header(cfg: &ExperimentConfig, what: &str) -> String {
    format!(
        "# cmasep {what} config_sha256={} seed={} trials={} reference_trials={} t_perf_symbols={} reference_t_perf_symbols={} histogram_bins={}\n",
        cfg.hash(),
        cfg.seed,
        cfg.trials,
        REFERENCE_TRIALS,
        cfg.t_perf_symbols,
        REFERENCE_T_PERF,
        HISTOGRAM_BINS
    )
}

/// Per-trial, per-stream rows.
pub fn trials_csv(cfg: &ExperimentConfig, results: &[TrialResult]) -> String {
    let n = cfg.n_sources();
    let mut out = header(cfg, "experiment");
    out.push_str("trial,method,stream,source,sinr_db,ser,final_cost,wiener_sinr_db");
    for k in 0..n {
        let _ = write!(out, ",sinr_src{k}");
    }
    out.push('\n');
    for r in results {
        for (m, score) in &r.methods {
            for (i, s) in score.streams.iter().enumerate() {
                let _ = write!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    r.trial,
                    m.label(),
                    i,
                    s.source,
                    fmt_f(s.matched_sinr_db()),
                    s.ser.map_or(String::new(), fmt_f),
                    fmt_f(s.final_cost),
                    fmt_f(score.wiener_sinr_db[s.source])
                );
                for v in &s.sinr_db {
                    let _ = write!(out, ",{}", fmt_f(*v));
                }
                out.push('\n');
            }
        }
    }
    out
}

/// Fraction of SER below `1e-2` and median SINR per method and source.
pub fn summary_csv(cfg: &ExperimentConfig, results: &[TrialResult]) -> String {
    let n = cfg.n_sources();
    let mut out = header(cfg, "summary");
    out.push_str("method,source,fraction_ser_below_1e-2,median_sinr_db,trials\n");
    for &m in &cfg.methods {
        let frac = ser_success_fraction(results, m, n, 1e-2);
        for (k, f) in frac.iter().enumerate() {
            let mut sinrs: Vec<f64> = results
                .iter()
                .filter_map(|r| r.methods.iter().find(|(mm, _)| *mm == m))
                .flat_map(|(_, s)| s.streams.iter().filter(|st| st.source == k).map(|st| st.matched_sinr_db()))
                .collect();
            sinrs.sort_by(|a, b| a.total_cmp(b));
            let med = if sinrs.is_empty() { f64::NAN } else { sinrs[sinrs.len() / 2] };
            let f = if cfg.compute_ser { fmt_f(*f) } else { String::new() };
            let _ = writeln!(out, "{},{},{},{},{}", m.label(), k, f, fmt_f(med), results.len());
        }
    }
    out
}

/// Histogram with `HISTOGRAM_BINS` equal bins over the observed finite range.
pub fn histogram(values: &[f64]) -> Vec<(f64, f64, usize)> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Vec::new();
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / HISTOGRAM_BINS as f64 } else { 1.0 };
    let mut counts = vec![0usize; HISTOGRAM_BINS];
    for v in finite {
        let b = (((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
        counts[b] += 1;
    }
    counts.into_iter().enumerate().map(|(b, c)| (lo + b as f64 * width, lo + (b + 1) as f64 * width, c)).collect()
}

/// Histograms of the first stream's final cost and SINR per method.
pub fn histograms_csv(cfg: &ExperimentConfig, results: &[TrialResult]) -> String {
    let mut out = header(cfg, "histograms");
    out.push_str("method,quantity,bin_low,bin_high,count\n");
    for &m in &cfg.methods {
        let first = |f: &dyn Fn(&StreamScore) -> f64| -> Vec<f64> {
            results
                .iter()
                .filter_map(|r| r.methods.iter().find(|(mm, _)| *mm == m))
                .filter_map(|(_, s)| s.streams.first().map(f))
                .collect()
        };
        for (name, vals) in [("final_cost", first(&|s| s.final_cost)), ("sinr_db", first(&|s| s.matched_sinr_db()))] {
            for (a, b, c) in histogram(&vals) {
                let _ = writeln!(out, "{},{},{},{},{}", m.label(), name, fmt_f(a), fmt_f(b), c);
            }
        }
    }
    out
}

/// One row of the variational table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaminRow {
    pub gamma: f64,
    pub beta_min: f64,
    pub eta_min: f64,
    pub beta_prime_min: f64,
    pub beta1_min: f64,
    /// `beta_min` with the kurtosis set to zero.
    pub beta_min_kappa0: f64,
    pub below_two: bool,
    pub godard_pair: bool,
    pub modified_half: bool,
    pub modified_pair: bool,
    pub final_pair: bool,
}

/// Variational infima along the configured `gamma` grid (warm-started).
pub fn run_betamin(cfg: &BetaminConfig, seed: u64) -> Result<Vec<BetaminRow>> {
    if cfg.gammas.is_empty() {
        return Err(Error::Config("betamin needs a non-empty gamma grid".into()));
    }
    if cfg.gammas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("gamma grid must be nondecreasing".into()));
    }
    let opts = VariationalOptions { cells_per_unit: cfg.cells_per_unit, restarts: cfg.restarts, seed, ..Default::default() };
    let jobs = [
        (Objective::Phi, cfg.kappa),
        (Objective::KurtosisOnly, cfg.kappa),
        (Objective::PhiPrime, cfg.kappa),
        (Objective::PhiRealConstrained, cfg.kappa),
        (Objective::Phi, 0.0),
    ];
    let curves =
        jobs.par_iter().map(|&(obj, kappa)| minimize_curve(obj, &cfg.gammas, kappa, &opts)).collect::<Result<Vec<_>>>()?;
    Ok(cfg
        .gammas
        .iter()
        .enumerate()
        .map(|(i, &gamma)| {
            let v = |c: usize| curves[c][i].value;
            let report = check_conditions(v(0), v(1), v(2), cfg.k);
            BetaminRow {
                gamma,
                beta_min: v(0),
                eta_min: v(1),
                beta_prime_min: v(2),
                beta1_min: v(3),
                beta_min_kappa0: v(4),
                below_two: report.separation_distinct.holds,
                godard_pair: report.godard_pair.holds,
                modified_half: report.modified_half.holds,
                modified_pair: report.modified_pair.holds,
                final_pair: report.final_pair.holds,
            }
        })
        .collect())
}

pub fn betamin_csv(cfg: &ExperimentConfig, rows: &[BetaminRow]) -> String {
    let b = &cfg.betamin;
    let mut out = format!(
        "# cmasep betamin config_sha256={} seed={} kappa={} k={} cells_per_unit={} restarts={}\n",
        cfg.hash(),
        cfg.seed,
        b.kappa,
        b.k,
        b.cells_per_unit,
        b.restarts
    );
    out.push_str(
        "gamma,beta_min,eta_min,beta_prime_min,beta1_min,beta_min_kappa0,beta_min_below_2,godard_pair,beta_prime_below_half,modified_pair,final_pair\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:.4},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{}",
            r.gamma,
            r.beta_min,
            r.eta_min,
            r.beta_prime_min,
            r.beta1_min,
            r.beta_min_kappa0,
            r.below_two,
            r.godard_pair,
            r.modified_half,
            r.modified_pair,
            r.final_pair
        );
    }
    out
}

/// Detection outcome of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectRow {
    pub trial: usize,
    pub truth: Vec<f64>,
    pub detected: Vec<f64>,
    pub hits: usize,
    pub misses: usize,
    pub false_alarms: usize,
}

/// Detects the significant frequencies on every trial's observation.
pub fn run_detect(cfg: &ExperimentConfig) -> Result<Vec<DetectRow>> {
    cfg.validate()?;
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let trial = draw_trial(cfg, t)?;
            let m = trial.obs.len();
            let step = cfg.detect.grid_step.unwrap_or(1.0 / m as f64);
            let found = detect_sig_freqs(&trial.obs, &cfg.detect.lags, step, cfg.detect.threshold_factor)?;
            let detected: Vec<f64> = found.iter().map(|d| d.freq).collect();
            let truth = true_freq_sets(&trial.specs, cfg.sample_period());
            let tol = cfg.detect.tolerance_bins * step.max(1.0 / m as f64);
            let tally = tally_detections(&detected, &truth, tol);
            Ok(DetectRow {
                trial: t,
                truth: truth.i_cs,
                detected,
                hits: tally.hits,
                misses: tally.misses,
                false_alarms: tally.false_alarms,
            })
        })
        .collect()
}

pub fn detect_csv(cfg: &ExperimentConfig, rows: &[DetectRow]) -> String {
    let mut out = header(cfg, "detect");
    out.push_str("trial,true_freqs,detected_freqs,hits,misses,false_alarms\n");
    let join = |v: &[f64]| v.iter().map(|f| format!("{f:.6}")).collect::<Vec<_>>().join(";");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.trial, join(&r.truth), join(&r.detected), r.hits, r.misses, r.false_alarms);
    }
    out
}

/// Single-trial separation with the filter taps of every stream.
pub fn separate_csv(cfg: &ExperimentConfig, result: &TrialResult) -> String {
    let mut out = trials_csv(cfg, std::slice::from_ref(result));
    let _ =
        writeln!(out, "# significant_freqs={}", result.sig_freqs.iter().map(|f| format!("{f:.8}")).collect::<Vec<_>>().join(";"));
    out
}

/// Taps of every stream's filter in one trial.
pub fn separate_taps_csv(cfg: &ExperimentConfig, result: &TrialResult) -> String {
    let mut out = header(cfg, "taps");
    out.push_str("trial,method,stream,source,final_cost,iterations,sensor,lag,re,im\n");
    for (m, score) in &result.methods {
        for (i, st) in score.streams.iter().enumerate() {
            for (s, row) in st.filter.taps.iter().enumerate() {
                for (k, z) in row.iter().enumerate() {
                    let lag = k as i64 - st.filter.half_len as i64;
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{:.12e},{:.12e}",
                        result.trial,
                        m.label(),
                        i,
                        st.source,
                        fmt_f(st.final_cost),
                        st.iterations,
                        s,
                        lag,
                        z.re,
                        z.im
                    );
                }
            }
        }
    }
    out
}

/// Distance of each detected frequency to the nearest true significant one.
pub fn detection_errors(detected: &[f64], truth: &[f64]) -> Vec<f64> {
    detected.iter().map(|&d| truth.iter().map(|&t| freq_distance(d, t)).fold(f64::INFINITY, f64::min)).collect()
}
