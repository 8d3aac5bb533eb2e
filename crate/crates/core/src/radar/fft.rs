use super::{range_resolution, ChirpConfig, RadarError, RadarFrame};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

/// Lower clamp for dBFS values of empty bins.
pub const DBFS_FLOOR: f64 = -200.0;

/// Positive-frequency range spectrum of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeProfile {
    pub rx_count: usize,
    pub n_chirps: usize,
    pub n_bins: usize,
    /// Chirp-averaged spectrum, `[rx][bin]`.
    pub bins: Vec<Complex64>,
    /// Per-chirp spectra, `[chirp][rx][bin]`, kept as beamformer snapshots.
    pub chirp_bins: Vec<Complex64>,
    pub bin_width: f64,
    /// `20·log10(|bin| / (N/2))`, `[rx][bin]`.
    pub power_dbfs: Vec<f64>,
}

impl RangeProfile {
    pub fn offset(&self, rx: usize, bin: usize) -> usize {
        rx * self.n_bins + bin
    }

    pub fn bin(&self, rx: usize, bin: usize) -> Complex64 {
        self.bins[self.offset(rx, bin)]
    }

    /// Power of `bin` summed over receivers.
    pub fn summed_power(&self, bin: usize) -> f64 {
        (0..self.rx_count).map(|k| self.bin(k, bin).norm_sqr()).sum()
    }

    /// `κ × n_chirps` snapshot matrix for one range bin.
    pub fn snapshots(&self, bin: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.rx_count, self.n_chirps, |k, c| {
            self.chirp_bins[(c * self.rx_count + k) * self.n_bins + bin]
        })
    }
}

pub fn to_dbfs(magnitude: f64, full_scale: f64) -> f64 {
    if magnitude > 0.0 {
        (20.0 * (magnitude / full_scale).log10()).max(DBFS_FLOOR)
    } else {
        DBFS_FLOOR
    }
}

/// Periodic Hann window; its coefficients sum to `n/2`.
fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Hann-windowed FFT along the ADC axis of every chirp and Rx, coherent mean
/// over chirps, positive half kept.
pub fn range_fft(frame: &RadarFrame, cfg: &ChirpConfig) -> Result<RangeProfile, RadarError> {
    if !frame.matches(cfg) {
        return Err(RadarError::ConfigMismatch(format!(
            "frame is {}x{}x{}, config expects {}x{}x{}",
            frame.n_chirps, frame.rx_count, frame.adc_samples, cfg.n_chirps, cfg.rx_count, cfg.adc_samples
        )));
    }
    let n = frame.adc_samples;
    let n_bins = n / 2;
    let window = hann(n);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut chirp_bins = Vec::with_capacity(frame.n_chirps * frame.rx_count * n_bins);
    let mut bins = vec![Complex64::new(0.0, 0.0); frame.rx_count * n_bins];
    for c in 0..frame.n_chirps {
        for k in 0..frame.rx_count {
            for ((b, x), w) in buf.iter_mut().zip(frame.row(c, k)).zip(&window) {
                *b = x * w;
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            chirp_bins.extend_from_slice(&buf[..n_bins]);
            for (acc, v) in bins[k * n_bins..(k + 1) * n_bins].iter_mut().zip(&buf[..n_bins]) {
                *acc += v;
            }
        }
    }
    let inv = 1.0 / frame.n_chirps as f64;
    bins.iter_mut().for_each(|b| *b *= inv);
    let full_scale = n as f64 / 2.0;
    let power_dbfs = bins.iter().map(|b| to_dbfs(b.norm(), full_scale)).collect();
    Ok(RangeProfile {
        rx_count: frame.rx_count,
        n_chirps: frame.n_chirps,
        n_bins,
        bins,
        chirp_bins,
        bin_width: range_resolution(cfg),
        power_dbfs,
    })
}

/// The three bins `(t−1, t, t+1)` around the strongest summed-Rx bin within
/// ±2 bins of the expected leaf range. On an empty scene this picks the
/// largest noise bin; callers gate on SNR.
pub fn leaf_zone(profile: &RangeProfile, d_t: f64) -> Result<[usize; 3], RadarError> {
    let last = profile.n_bins - 1;
    let expected = (d_t / profile.bin_width).round();
    if !(expected >= 0.0 && expected <= last as f64) {
        return Err(RadarError::ConfigMismatch(format!(
            "distance {d_t} m outside the {}-bin profile",
            profile.n_bins
        )));
    }
    let centre = expected as usize;
    let lo = centre.saturating_sub(2);
    let hi = (centre + 2).min(last);
    let mut t = lo;
    for b in lo..=hi {
        if profile.summed_power(b) > profile.summed_power(t) {
            t = b;
        }
    }
    if t == 0 || t == last {
        return Err(RadarError::EdgeBin { bin: t });
    }
    Ok([t - 1, t, t + 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame_from_rows(cfg: &ChirpConfig, row: impl Fn(usize) -> Complex64) -> RadarFrame {
        let mut f = RadarFrame::zeros(cfg, 0.0, 0);
        for c in 0..cfg.n_chirps {
            for k in 0..cfg.rx_count {
                for i in 0..cfg.adc_samples {
                    let idx = f.index(c, k, i);
                    f.cube[idx] = row(i);
                }
            }
        }
        f
    }

    fn small_cfg() -> ChirpConfig {
        ChirpConfig {
            n_chirps: 2,
            ..ChirpConfig::default()
        }
    }

    #[test]
    fn hann_sum_is_half_length() {
        let s: f64 = hann(1024).iter().sum();
        assert!((s - 512.0).abs() < 1e-9);
    }

    #[test]
    fn impulse_gives_flat_spectrum() {
        let cfg = small_cfg();
        // Put the impulse at the window peak so it survives windowing.
        let f = frame_from_rows(&cfg, |i| {
            if i == cfg.adc_samples / 2 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let p = range_fft(&f, &cfg).unwrap();
        for b in 0..p.n_bins {
            assert!((p.bin(0, b).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_tone_is_zero_dbfs_with_low_far_sidelobes() {
        let cfg = small_cfg();
        let n = cfg.adc_samples as f64;
        let bin = 40.0;
        let f = frame_from_rows(&cfg, |i| Complex64::from_polar(1.0, 2.0 * PI * bin * i as f64 / n));
        let p = range_fft(&f, &cfg).unwrap();
        let peak = p.power_dbfs[p.offset(1, 40)];
        assert!(peak.abs() < 1e-9, "{peak}");
        for b in 0..p.n_bins {
            if (b as i64 - 40).abs() > 2 {
                assert!(peak - p.power_dbfs[p.offset(1, b)] >= 30.0, "bin {b}");
            }
            assert!(p.power_dbfs[p.offset(1, b)] <= 1e-9);
        }
    }

    #[test]
    fn silence_is_clamped() {
        let cfg = small_cfg();
        let f = RadarFrame::zeros(&cfg, 0.0, 0);
        let p = range_fft(&f, &cfg).unwrap();
        assert!(p.power_dbfs.iter().all(|&d| d == DBFS_FLOOR));
    }

    #[test]
    fn mismatched_frame_is_rejected() {
        let cfg = small_cfg();
        let mut f = RadarFrame::zeros(&cfg, 0.0, 0);
        f.rx_count = 3;
        assert!(matches!(range_fft(&f, &cfg), Err(RadarError::ConfigMismatch(_))));
    }

    #[test]
    fn half_bin_target_picks_the_stronger_neighbour() {
        let cfg = small_cfg();
        let n = cfg.adc_samples as f64;
        // Tone between bins 15 and 16, slightly nearer 16.
        let f = frame_from_rows(&cfg, |i| Complex64::from_polar(0.1, 2.0 * PI * 15.55 * i as f64 / n));
        let p = range_fft(&f, &cfg).unwrap();
        let d = 15.5 * p.bin_width;
        assert_eq!(leaf_zone(&p, d).unwrap(), [15, 16, 17]);
    }

    #[test]
    fn edge_peaks_are_rejected() {
        let cfg = small_cfg();
        let f = frame_from_rows(&cfg, |_| Complex64::new(0.1, 0.0));
        let p = range_fft(&f, &cfg).unwrap();
        assert!(matches!(leaf_zone(&p, 0.03), Err(RadarError::EdgeBin { bin: 0 })));
    }
}
