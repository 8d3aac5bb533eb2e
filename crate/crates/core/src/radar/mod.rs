//! Monostatic FMCW radar simulation: chirp configuration, echo synthesis,
//! range FFT and the three-bin leaf information zone.

mod fft;
pub mod raw;

pub use fft::{leaf_zone, range_fft, RangeProfile, DBFS_FLOOR};

use crate::beam;
use crate::em::Polarization;
use crate::leaf::{self, LeafError, LeafState, SPEED_OF_LIGHT};
use crate::rng;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;

/// Sub-scatterers used to represent the leaf surface.
pub const SCATTER_POINTS: usize = 32;
/// ADC counts per unit amplitude.
pub const ADC_FULL_SCALE: f64 = 32768.0;
pub const MIN_DISTANCE: f64 = 0.2;
pub const MAX_DISTANCE: f64 = 2.0;
pub const MAX_AZIMUTH_OFFSET: f64 = 10.0;

#[derive(Debug, thiserror::Error)]
pub enum RadarError {
    #[error("invalid chirp config: {0}")]
    InvalidConfig(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("leaf peak at bin {bin} touches the edge of the profile")]
    EdgeBin { bin: usize },
    #[error(transparent)]
    Leaf(#[from] LeafError),
}

/// Chirp and array parameters of the radar front end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChirpConfig {
    pub f_start: f64,
    pub bandwidth: f64,
    /// Hz/s.
    pub slope: f64,
    pub idle_time: f64,
    pub ramp_start: f64,
    pub ramp_end: f64,
    pub adc_samples: usize,
    pub sample_rate: f64,
    pub n_chirps: usize,
    pub chirp_time: f64,
    pub frame_length: f64,
    pub tx_count: usize,
    pub rx_count: usize,
    pub rx_spacing: f64,
    pub tx_spacings: Vec<f64>,
    pub tx_gain: f64,
    pub rx_gain: f64,
    pub tx_amplitude: f64,
}

impl Default for ChirpConfig {
    fn default() -> Self {
        let f_start = 77e9;
        let bandwidth = 3.75e9;
        let lambda = SPEED_OF_LIGHT / (f_start + bandwidth / 2.0);
        let gain = 10f64.powf(10.0 / 20.0);
        Self {
            f_start,
            bandwidth,
            slope: 18.32e12,
            idle_time: 7e-6,
            ramp_start: 7e-6,
            ramp_end: 212.8e-6,
            adc_samples: 1024,
            sample_rate: 5e6,
            n_chirps: 32,
            chirp_time: 10e-6,
            frame_length: 0.350,
            tx_count: 3,
            rx_count: 4,
            rx_spacing: lambda / 2.0,
            tx_spacings: vec![0.0, lambda, 2.0 * lambda],
            tx_gain: gain,
            rx_gain: gain,
            tx_amplitude: 10.0,
        }
    }
}

impl ChirpConfig {
    pub fn validate(&self) -> Result<(), RadarError> {
        let bad = |m: String| Err(RadarError::InvalidConfig(m));
        if !(self.bandwidth > 0.0) {
            return bad(format!("bandwidth {} must be positive", self.bandwidth));
        }
        if !(self.f_start > 0.0 && self.slope > 0.0 && self.sample_rate > 0.0) {
            return bad("start frequency, slope and sample rate must be positive".into());
        }
        if self.adc_samples < 4 || !self.adc_samples.is_power_of_two() {
            return bad(format!("adc_samples {} is not a power of two", self.adc_samples));
        }
        if self.rx_count < 2 {
            return bad(format!("rx_count {} < 2", self.rx_count));
        }
        if self.n_chirps == 0 {
            return bad("n_chirps must be at least 1".into());
        }
        if self.tx_spacings.len() != self.tx_count || self.tx_count == 0 {
            return bad(format!(
                "{} tx spacings for {} transmitters",
                self.tx_spacings.len(),
                self.tx_count
            ));
        }
        if self.tx_spacings[0] != 0.0 {
            return bad("the first Tx spacing must be 0".into());
        }
        if !(self.rx_spacing > 0.0) {
            return bad("rx_spacing must be positive".into());
        }
        Ok(())
    }

    pub fn carrier_frequency(&self) -> f64 {
        self.f_start + self.bandwidth / 2.0
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency()
    }

    pub fn n_bins(&self) -> usize {
        self.adc_samples / 2
    }

    /// Largest range whose beat tone stays in the retained half spectrum.
    pub fn max_range(&self) -> f64 {
        self.sample_rate * SPEED_OF_LIGHT / (4.0 * self.slope)
    }

    pub fn rx_array(&self) -> beam::RxArray {
        beam::RxArray {
            elements: self.rx_count,
            spacing: self.rx_spacing,
            wavelength: self.wavelength(),
        }
    }

    /// SHA-256 of the canonical JSON encoding; stamped into raw captures.
    pub fn digest(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).into()
    }
}

/// `c / (2·BW)`.
pub fn range_resolution(cfg: &ChirpConfig) -> f64 {
    SPEED_OF_LIGHT / (2.0 * cfg.bandwidth)
}

/// Received amplitude of a mirror-like target at distance `d_t` with
/// reflection coefficient `r`: `A_o g_t g_r λ / (4π · 2 d_t) · r`.
pub fn friis_amplitude(a_o: f64, g_t: f64, g_r: f64, lambda: f64, d_t: f64, r: f64) -> f64 {
    a_o * g_t * g_r * lambda / (4.0 * PI * 2.0 * d_t) * r
}

/// Point reflector behind the leaf, e.g. the styrofoam mount.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundReflector {
    pub range: f64,
    pub rcs_dbsm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    /// `None` leaves only background reflectors and noise.
    pub leaf: Option<LeafState>,
    pub distance: f64,
    /// Leaf centre direction off boresight, degrees.
    pub azimuth_offset: f64,
    /// Tilt of the leaf normal, degrees.
    pub aspect_angle: f64,
    pub background_reflectors: Vec<BackgroundReflector>,
    /// Per-sample SNR of a unit mirror at `distance`, dB. Infinite means
    /// noise-free.
    pub snr: f64,
    pub polarization: Polarization,
}

impl Scene {
    pub fn new(leaf: LeafState, distance: f64) -> Self {
        Self {
            leaf: Some(leaf),
            distance,
            azimuth_offset: 0.0,
            aspect_angle: 0.0,
            background_reflectors: Vec::new(),
            snr: 30.0,
            polarization: Polarization::TE,
        }
    }

    pub fn validate(&self) -> Result<(), RadarError> {
        if !(MIN_DISTANCE..=MAX_DISTANCE).contains(&self.distance) {
            return Err(RadarError::InvalidScene(format!(
                "distance {} m outside [{MIN_DISTANCE}, {MAX_DISTANCE}]",
                self.distance
            )));
        }
        if !(self.azimuth_offset.abs() <= MAX_AZIMUTH_OFFSET) {
            return Err(RadarError::InvalidScene(format!(
                "azimuth offset {}° beyond ±{MAX_AZIMUTH_OFFSET}°",
                self.azimuth_offset
            )));
        }
        if !self.aspect_angle.is_finite() || self.snr.is_nan() {
            return Err(RadarError::InvalidScene("non-finite aspect or SNR".into()));
        }
        Ok(())
    }
}

/// One frame of ADC samples, laid out `[chirp][rx][sample]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarFrame {
    pub n_chirps: usize,
    pub rx_count: usize,
    pub adc_samples: usize,
    pub cube: Vec<Complex64>,
    pub steering_angle: f64,
    pub seed: u64,
}

impl RadarFrame {
    pub fn zeros(cfg: &ChirpConfig, steering_angle: f64, seed: u64) -> Self {
        Self {
            n_chirps: cfg.n_chirps,
            rx_count: cfg.rx_count,
            adc_samples: cfg.adc_samples,
            cube: vec![Complex64::new(0.0, 0.0); cfg.n_chirps * cfg.rx_count * cfg.adc_samples],
            steering_angle,
            seed,
        }
    }

    pub fn index(&self, chirp: usize, rx: usize, sample: usize) -> usize {
        (chirp * self.rx_count + rx) * self.adc_samples + sample
    }

    pub fn row(&self, chirp: usize, rx: usize) -> &[Complex64] {
        let start = self.index(chirp, rx, 0);
        &self.cube[start..start + self.adc_samples]
    }

    pub fn matches(&self, cfg: &ChirpConfig) -> bool {
        self.n_chirps == cfg.n_chirps
            && self.rx_count == cfg.rx_count
            && self.adc_samples == cfg.adc_samples
            && self.cube.len() == cfg.n_chirps * cfg.rx_count * cfg.adc_samples
    }
}

/// Rounds to the ADC grid; full scale ±1.0 maps to ±32768 counts.
pub fn quantize(x: f64) -> i16 {
    (x * ADC_FULL_SCALE).round().clamp(-32768.0, 32767.0) as i16
}

pub fn dequantize(q: i16) -> f64 {
    f64::from(q) / ADC_FULL_SCALE
}

/// A point echo: range, arrival angle (degrees) and complex amplitude.
struct Echo {
    range: f64,
    angle: f64,
    amplitude: Complex64,
}

/// Normalized Tx array factor toward `alpha_deg` under the given phase
/// offsets.
fn tx_array_factor(cfg: &ChirpConfig, phases: &[f64], alpha_deg: f64) -> Complex64 {
    let k = 2.0 * PI / cfg.wavelength();
    let sin_a = alpha_deg.to_radians().sin();
    let sum: Complex64 = cfg
        .tx_spacings
        .iter()
        .zip(phases)
        .map(|(s, phi)| Complex64::from_polar(1.0, k * s * sin_a - phi))
        .sum();
    sum / cfg.tx_count as f64
}

fn leaf_echoes(cfg: &ChirpConfig, scene: &Scene, leaf: &LeafState, eta: f64, seed: u64) -> Result<Vec<Echo>, RadarError> {
    let lambda = cfg.wavelength();
    let theta = (eta - scene.azimuth_offset + scene.aspect_angle).to_radians();
    let scatter = leaf::rcs(leaf, theta, cfg.carrier_frequency(), scene.polarization)?;
    let scale = friis_amplitude(cfg.tx_amplitude, cfg.tx_gain, cfg.rx_gain, lambda, scene.distance, 1.0);
    let phases = beam::tx_phase_offsets(eta, &cfg.tx_spacings, lambda);
    let jitter_std = 4.0 * PI * leaf.spec.roughness_sigma * theta.cos() / lambda;
    // The surface realisation belongs to the placement, not to the steering
    // angle, so these draws ignore `eta`.
    let mut rng = rng::substream(seed, rng::DIFFUSE, &[]);
    let half_width = leaf.spec.width * scene.aspect_angle.to_radians().cos() / 2.0;
    let rho = scatter.roughness;
    let mut echoes = vec![Echo {
        range: scene.distance,
        angle: scene.azimuth_offset,
        amplitude: (scatter.surface_amplitude + scatter.volumetric_amplitude)
            * scale
            * tx_array_factor(cfg, &phases, scene.azimuth_offset),
    }];
    let k = SCATTER_POINTS as f64;
    for p in 0..SCATTER_POINTS {
        let z: f64 = StandardNormal.sample(&mut rng);
        if jitter_std == 0.0 {
            continue;
        }
        let x = ((p as f64 + 0.5) / k * 2.0 - 1.0) * half_width;
        let alpha = scene.azimuth_offset + (x / scene.distance).atan().to_degrees();
        let diffuse = scatter.smooth_surface_amplitude * (Complex64::from_polar(1.0, jitter_std * z) - rho);
        echoes.push(Echo {
            range: scene.distance,
            angle: alpha,
            amplitude: diffuse * scale / k * tx_array_factor(cfg, &phases, alpha),
        });
    }
    Ok(echoes)
}

fn background_echo(cfg: &ChirpConfig, phases: &[f64], b: &BackgroundReflector) -> Echo {
    let lambda = cfg.wavelength();
    let sigma = 10f64.powf(b.rcs_dbsm / 10.0);
    let amp = cfg.tx_amplitude * cfg.tx_gain * cfg.rx_gain * lambda * sigma.sqrt()
        / ((4.0 * PI).powf(1.5) * b.range * b.range);
    Echo {
        range: b.range,
        angle: 0.0,
        amplitude: tx_array_factor(cfg, phases, 0.0) * amp,
    }
}

/// Synthesizes one frame for Tx steering angle `eta` (degrees).
///
/// The coherent leaf echo (roughness-attenuated surface plus volumetric
/// term) arrives from the leaf centre. The diffuse remainder is an ensemble of
/// [`SCATTER_POINTS`] facets across the leaf width, each carrying the
/// smooth-surface reflection times `exp(jψ) − ρ` with `ψ` Gaussian of
/// standard deviation `4πσ cosθ / λ`; its ensemble mean is zero. Noise is complex white
/// Gaussian, independent per chirp and Rx. Samples are quantized to 16 bits.
pub fn synth_frame(cfg: &ChirpConfig, scene: &Scene, eta: f64, seed: u64) -> Result<RadarFrame, RadarError> {
    cfg.validate()?;
    scene.validate()?;
    let max_range = cfg.max_range();
    let ranges = std::iter::once(scene.distance).chain(scene.background_reflectors.iter().map(|b| b.range));
    for r in ranges {
        if !(r > 0.0) || r >= max_range {
            return Err(RadarError::ConfigMismatch(format!(
                "range {r} m outside the unambiguous span (0, {max_range:.3}) m"
            )));
        }
    }

    let lambda = cfg.wavelength();
    let phases = beam::tx_phase_offsets(eta, &cfg.tx_spacings, lambda);
    let mut echoes = match &scene.leaf {
        Some(leaf) => leaf_echoes(cfg, scene, leaf, eta, seed)?,
        None => Vec::new(),
    };
    echoes.extend(scene.background_reflectors.iter().map(|b| background_echo(cfg, &phases, b)));

    // Per range: one beat tone and a per-Rx complex coefficient.
    let n = cfg.adc_samples;
    let mut clean = vec![Complex64::new(0.0, 0.0); cfg.rx_count * n];
    let mut groups: Vec<(f64, Vec<Complex64>)> = Vec::new();
    for e in &echoes {
        let rx_step = 2.0 * PI / lambda * cfg.rx_spacing * e.angle.to_radians().sin();
        let carrier = Complex64::from_polar(1.0, 4.0 * PI * e.range / lambda);
        let coeffs: Vec<Complex64> = (0..cfg.rx_count)
            .map(|k| e.amplitude * carrier * Complex64::from_polar(1.0, rx_step * k as f64))
            .collect();
        match groups.iter_mut().find(|(r, _)| *r == e.range) {
            Some((_, acc)) => acc.iter_mut().zip(&coeffs).for_each(|(a, c)| *a += c),
            None => groups.push((e.range, coeffs)),
        }
    }
    for (range, coeffs) in &groups {
        let beat = 2.0 * cfg.slope * range / SPEED_OF_LIGHT;
        let step = 2.0 * PI * beat / cfg.sample_rate;
        for (k, c) in coeffs.iter().enumerate() {
            let row = &mut clean[k * n..(k + 1) * n];
            for (i, v) in row.iter_mut().enumerate() {
                *v += c * Complex64::from_polar(1.0, step * i as f64);
            }
        }
    }

    let reference = friis_amplitude(cfg.tx_amplitude, cfg.tx_gain, cfg.rx_gain, lambda, scene.distance, 1.0);
    let noise_std = if scene.snr.is_finite() {
        reference / 10f64.powf(scene.snr / 20.0) / 2f64.sqrt()
    } else {
        0.0
    };
    let mut rng = rng::substream(seed, rng::NOISE, &[eta.to_bits()]);
    let mut frame = RadarFrame::zeros(cfg, eta, seed);
    for chirp in 0..cfg.n_chirps {
        for k in 0..cfg.rx_count {
            let start = frame.index(chirp, k, 0);
            for i in 0..n {
                let mut v = clean[k * n + i];
                if noise_std > 0.0 {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    v += Complex64::new(re, im) * noise_std;
                }
                frame.cube[start + i] = Complex64::new(dequantize(quantize(v.re)), dequantize(quantize(v.im)));
            }
        }
    }
    Ok(frame)
}
