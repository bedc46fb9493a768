//! Random multipath array channels and the N-sensor receiver mixture.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::sigmodel::{apply_offset, check_shannon, rrc_pulse, synth_with_pulse, SourceSpec, SymbolSequence};
use crate::{Error, Result, C64};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Uniform circular array with half-wavelength spacing between neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub n_sensors: usize,
    pub f0_hz: f64,
}

impl ArrayGeometry {
    pub fn circular(n_sensors: usize, f0_hz: f64) -> Result<Self> {
        if n_sensors == 0 {
            return Err(Error::Domain("array needs at least one sensor".into()));
        }
        if !(f0_hz > 0.0) {
            return Err(Error::Domain(format!("center frequency must be positive, got {f0_hz}")));
        }
        Ok(ArrayGeometry { n_sensors, f0_hz })
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.f0_hz
    }

    pub fn radius(&self) -> f64 {
        if self.n_sensors < 2 {
            0.0
        } else {
            self.wavelength() / (4.0 * (PI / self.n_sensors as f64).sin())
        }
    }

    /// Sensor positions in the horizontal plane, metres.
    pub fn positions(&self) -> Vec<[f64; 3]> {
        let r = self.radius();
        (0..self.n_sensors)
            .map(|m| {
                let a = 2.0 * PI * m as f64 / self.n_sensors as f64;
                [r * a.cos(), r * a.sin(), 0.0]
            })
            .collect()
    }
}

/// Unit vector pointing toward azimuth `theta`, elevation `phi`.
pub fn direction(azimuth: f64, elevation: f64) -> [f64; 3] {
    [elevation.cos() * azimuth.cos(), elevation.cos() * azimuth.sin(), elevation.sin()]
}

/// Narrowband array response `exp(-2 i pi (f0/c) <p_m, u>)`.
pub fn steering_vector(geom: &ArrayGeometry, azimuth: f64, elevation: f64) -> Vec<C64> {
    let u = direction(azimuth, elevation);
    let k = 2.0 * PI * geom.f0_hz / SPEED_OF_LIGHT;
    geom.positions().iter().map(|p| C64::from_polar(1.0, -k * (p[0] * u[0] + p[1] * u[1] + p[2] * u[2]))).collect()
}

/// Tap-delay profile with average path powers normalized to unit total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipathProfile {
    pub name: String,
    /// Path delays, seconds.
    pub delays: Vec<f64>,
    pub powers_db: Vec<f64>,
}

#[derive(Deserialize)]
struct ProfileFile {
    profile: Vec<ProfileEntry>,
}

#[derive(Deserialize)]
struct ProfileEntry {
    name: String,
    delays_us: Vec<f64>,
    powers_db: Vec<f64>,
}

/// Built-in profiles in the same format accepted by [`MultipathProfile::load_all`].
pub const DEFAULT_PROFILES: &str = r#"
# Six-tap profiles with typical delay spreads for urban, bad-urban,
# hilly-terrain and rural-area propagation.
[[profile]]
name = "TU"
delays_us = [0.0, 0.2, 0.5, 1.6, 2.3, 5.0]
powers_db = [-3.0, 0.0, -2.0, -6.0, -8.0, -10.0]

[[profile]]
name = "BU"
delays_us = [0.0, 0.4, 1.0, 1.6, 5.0, 10.0]
powers_db = [-3.0, 0.0, -3.0, -5.0, -2.0, -4.0]

[[profile]]
name = "HT"
delays_us = [0.0, 0.2, 0.4, 0.6, 15.0, 17.0]
powers_db = [0.0, -2.0, -4.0, -7.0, -6.0, -12.0]

[[profile]]
name = "RA"
delays_us = [0.0, 0.1, 0.2, 0.3, 0.5, 0.7]
powers_db = [0.0, -4.0, -8.0, -12.0, -16.0, -20.0]
"#;

impl MultipathProfile {
    pub fn new(name: impl Into<String>, delays: Vec<f64>, powers_db: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if delays.is_empty() || delays.len() != powers_db.len() {
            return Err(Error::Config(format!("profile {name}: delays and powers must be non-empty and aligned")));
        }
        if delays.iter().chain(&powers_db).any(|v| !v.is_finite()) || delays.iter().any(|&d| d < 0.0) {
            return Err(Error::Config(format!("profile {name}: delays must be finite and non-negative")));
        }
        // Normalize to 0 dB total.
        let total: f64 = powers_db.iter().map(|p| 10f64.powf(p / 10.0)).sum();
        let shift = 10.0 * total.log10();
        let powers_db = powers_db.iter().map(|p| p - shift).collect();
        Ok(MultipathProfile { name, delays, powers_db })
    }

    /// One path, no delay, 0 dB.
    pub fn single_path() -> Self {
        MultipathProfile { name: "flat".into(), delays: vec![0.0], powers_db: vec![0.0] }
    }

    pub fn powers_linear(&self) -> Vec<f64> {
        self.powers_db.iter().map(|p| 10f64.powf(p / 10.0)).collect()
    }

    pub fn max_delay(&self) -> f64 {
        self.delays.iter().copied().fold(0.0, f64::max)
    }

    /// Parses `[[profile]]` tables with `name`, `delays_us`, `powers_db`.
    pub fn load_all(text: &str) -> Result<Vec<Self>> {
        let file: ProfileFile = toml::from_str(text).map_err(|e| Error::Config(format!("profile file: {e}")))?;
        file.profile
            .into_iter()
            .map(|p| MultipathProfile::new(p.name, p.delays_us.iter().map(|d| d * 1e-6).collect(), p.powers_db))
            .collect()
    }

    pub fn builtin(name: &str) -> Result<Self> {
        if name.eq_ignore_ascii_case("flat") {
            return Ok(Self::single_path());
        }
        Self::load_all(DEFAULT_PROFILES)?
            .into_iter()
            .find(|p| p.name.eq_ignore_ascii_case(name.trim_end_matches(['x', 'X'])))
            .ok_or_else(|| Error::Config(format!("unknown channel profile '{name}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathRealization {
    pub gain: C64,
    pub azimuth: f64,
    pub elevation: f64,
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub paths: Vec<PathRealization>,
    /// Steering vector of each path, `n_sensors` entries each.
    pub steering: Vec<Vec<C64>>,
}

impl ChannelRealization {
    /// Identity channel on a single-sensor array: one unit path, no delay.
    pub fn identity(n_sensors: usize) -> Self {
        ChannelRealization {
            paths: vec![PathRealization { gain: C64::new(1.0, 0.0), azimuth: 0.0, elevation: 0.0, delay: 0.0 }],
            steering: vec![vec![C64::new(1.0, 0.0); n_sensors]],
        }
    }

    pub fn n_sensors(&self) -> usize {
        self.steering.first().map_or(0, Vec::len)
    }

    pub fn max_delay(&self) -> f64 {
        self.paths.iter().map(|p| p.delay).fold(0.0, f64::max)
    }
}

/// Rayleigh path gains with uniformly drawn arrival angles.
pub fn draw_channel<R: Rng + ?Sized>(profile: &MultipathProfile, geom: &ArrayGeometry, rng: &mut R) -> ChannelRealization {
    let az = Uniform::new_inclusive(-PI, PI).expect("valid range");
    let el = Uniform::new_inclusive(-PI / 2.0, PI / 2.0).expect("valid range");
    let unit = Normal::new(0.0, 1.0).expect("valid sigma");
    let mut paths = Vec::with_capacity(profile.delays.len());
    let mut steering = Vec::with_capacity(profile.delays.len());
    for (&delay, power) in profile.delays.iter().zip(profile.powers_linear()) {
        let s = (power / 2.0).sqrt();
        let gain = C64::new(s * unit.sample(rng), s * unit.sample(rng));
        let azimuth = az.sample(rng);
        let elevation = el.sample(rng);
        steering.push(steering_vector(geom, azimuth, elevation));
        paths.push(PathRealization { gain, azimuth, elevation, delay });
    }
    ChannelRealization { paths, steering }
}

/// `N x M` complex recording, one row per sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelSignal {
    pub data: Vec<Vec<C64>>,
    pub sample_period: f64,
}

impl MultichannelSignal {
    pub fn new(data: Vec<Vec<C64>>, sample_period: f64) -> Result<Self> {
        let len = data.first().map_or(0, Vec::len);
        if data.is_empty() || len == 0 {
            return Err(Error::EmptyInput("multichannel signal needs at least one sensor and one sample"));
        }
        if data.iter().any(|row| row.len() != len) {
            return Err(Error::Domain("all sensors must have the same number of samples".into()));
        }
        if data.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain("multichannel signal contains non-finite samples".into()));
        }
        Ok(MultichannelSignal { data, sample_period })
    }

    pub fn zeros(n_sensors: usize, len: usize, sample_period: f64) -> Self {
        MultichannelSignal { data: vec![vec![C64::new(0.0, 0.0); len]; n_sensors], sample_period }
    }

    pub fn n_sensors(&self) -> usize {
        self.data.len()
    }

    pub fn len(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sensor(&self, m: usize) -> &[C64] {
        &self.data[m]
    }

    /// Samples `start .. start + len` of every sensor.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        MultichannelSignal {
            data: self.data.iter().map(|row| row[start..start + len].to_vec()).collect(),
            sample_period: self.sample_period,
        }
    }

    pub fn add_assign(&mut self, other: &MultichannelSignal) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().flatten().map(|z| z.norm_sqr()).sum()
    }
}

/// Mixture together with the bookkeeping needed for exact scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedSignal {
    pub mixture: MultichannelSignal,
    /// Noiseless received contribution of each source.
    pub contributions: Vec<MultichannelSignal>,
    pub noise: MultichannelSignal,
    /// Transmitted samples `exp(2 i pi n df_k) s_k(n)` with `t0 = 0`.
    pub sources: Vec<Vec<C64>>,
    /// Per-sensor noise variance.
    pub noise_var: f64,
}

/// Symbol index range `[lo, hi)` needed to synthesize `n_samples` samples
/// with path delays up to `max_delay`.
pub fn symbol_range(spec: &SourceSpec, sample_period: f64, n_samples: usize, max_delay: f64) -> Result<(i64, i64)> {
    let pulse = rrc_pulse(spec.symbol_period, spec.gamma)?;
    let t = spec.symbol_period;
    let span = pulse.span_symbols as f64;
    let lo = ((-max_delay / t) - span).ceil() as i64 - 1;
    let hi = (((n_samples as f64 - 1.0) * sample_period / t) + span).floor() as i64 + 2;
    Ok((lo, hi))
}

/// Noise variance per sensor for a per-source `Es/N0` in dB: `Es = P T`,
/// `N0 = sigma^2 T_e`, averaged over sources.
pub fn noise_variance(specs: &[SourceSpec], sample_period: f64, es_n0_db: f64) -> f64 {
    if es_n0_db.is_infinite() && es_n0_db > 0.0 || specs.is_empty() {
        return 0.0;
    }
    let mean_es: f64 = specs.iter().map(|s| s.power * s.symbol_period / sample_period).sum::<f64>() / specs.len() as f64;
    mean_es / 10f64.powf(es_n0_db / 10.0)
}

/// Builds `y(n) = sum_k exp(2 i pi n df_k) sum_p lambda_p a_p s_k(n T_e - tau_p) + noise`.
///
/// `es_n0_db = +inf` disables noise.
pub fn mix<R: Rng + ?Sized>(
    sources: &[(SourceSpec, SymbolSequence)],
    channels: &[ChannelRealization],
    sample_period: f64,
    n_samples: usize,
    es_n0_db: f64,
    rng: &mut R,
) -> Result<MixedSignal> {
    if sources.is_empty() {
        return Err(Error::EmptyInput("mix needs at least one source"));
    }
    if sources.len() != channels.len() {
        return Err(Error::Config(format!("{} sources but {} channels", sources.len(), channels.len())));
    }
    if n_samples == 0 {
        return Err(Error::EmptyInput("n_samples must be at least 1"));
    }
    let specs: Vec<SourceSpec> = sources.iter().map(|(s, _)| *s).collect();
    if !check_shannon(&specs, sample_period) {
        return Err(Error::Config("sampling rate violates the band-limited sampling condition".into()));
    }
    let n_sensors = channels[0].n_sensors();
    if n_sensors == 0 || channels.iter().any(|c| c.n_sensors() != n_sensors || c.paths.len() != c.steering.len()) {
        return Err(Error::Config("channels must share a non-empty sensor count".into()));
    }

    let mut mixture = MultichannelSignal::zeros(n_sensors, n_samples, sample_period);
    let mut contributions = Vec::with_capacity(sources.len());
    let mut transmitted = Vec::with_capacity(sources.len());
    for ((spec, symbols), channel) in sources.iter().zip(channels) {
        let pulse = rrc_pulse(spec.symbol_period, spec.gamma)?;
        let df = spec.delta_f(sample_period);
        let direct = synth_with_pulse(spec, &pulse, symbols, sample_period, n_samples, 0.0)?;
        transmitted.push(apply_offset(&direct.samples, df));
        let mut contrib = MultichannelSignal::zeros(n_sensors, n_samples, sample_period);
        for (path, steer) in channel.paths.iter().zip(&channel.steering) {
            let delayed = if path.delay == 0.0 {
                direct.samples.clone()
            } else {
                synth_with_pulse(spec, &pulse, symbols, sample_period, n_samples, -path.delay)?.samples
            };
            let delayed = apply_offset(&delayed, df);
            for (row, &a) in contrib.data.iter_mut().zip(steer) {
                let w = path.gain * a;
                for (y, &s) in row.iter_mut().zip(&delayed) {
                    *y += w * s;
                }
            }
        }
        mixture.add_assign(&contrib);
        contributions.push(contrib);
    }

    let noise_var = noise_variance(&specs, sample_period, es_n0_db);
    let mut noise = MultichannelSignal::zeros(n_sensors, n_samples, sample_period);
    if noise_var > 0.0 {
        let normal = Normal::new(0.0, (noise_var / 2.0).sqrt()).map_err(|e| Error::Domain(e.to_string()))?;
        for row in noise.data.iter_mut() {
            for z in row.iter_mut() {
                *z = C64::new(normal.sample(rng), normal.sample(rng));
            }
        }
        mixture.add_assign(&noise);
    }
    Ok(MixedSignal { mixture, contributions, noise, sources: transmitted, noise_var })
}
