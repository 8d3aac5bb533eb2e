//! Transmit beam steering and Capon (MVDR) receive beamforming.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Diagonal loading as a fraction of the mean per-element power.
pub const DIAGONAL_LOADING: f64 = 1e-3;
/// Relative tolerance under which two spectrum bins count as a tie.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BeamError {
    #[error("covariance is not positive definite after diagonal loading")]
    SingularCovariance,
    #[error("need at least {needed} snapshots, got {got}")]
    InsufficientSnapshots { needed: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid angle grid: {0}")]
    InvalidGrid(String),
}

/// Evenly spaced angle grid in degrees, inclusive at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleGrid {
    pub start_deg: f64,
    pub stop_deg: f64,
    pub step_deg: f64,
}

impl Default for AngleGrid {
    fn default() -> Self {
        Self {
            start_deg: -20.0,
            stop_deg: 20.0,
            step_deg: 2.0,
        }
    }
}

impl AngleGrid {
    pub fn new(start_deg: f64, stop_deg: f64, step_deg: f64) -> Result<Self, BeamError> {
        if !(step_deg > 0.0) || !(stop_deg >= start_deg) {
            return Err(BeamError::InvalidGrid(format!(
                "start {start_deg}, stop {stop_deg}, step {step_deg}"
            )));
        }
        Ok(Self {
            start_deg,
            stop_deg,
            step_deg,
        })
    }

    pub fn len(&self) -> usize {
        ((self.stop_deg - self.start_deg) / self.step_deg + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn angles(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.start_deg + i as f64 * self.step_deg)
            .collect()
    }
}

/// Uniform linear receive array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RxArray {
    pub elements: usize,
    pub spacing: f64,
    pub wavelength: f64,
}

/// Per-Tx phase offsets `φ_m = 2π (s_m / λ) sin η` for steering angle `eta_deg`.
pub fn tx_phase_offsets(eta_deg: f64, tx_spacings: &[f64], lambda: f64) -> Vec<f64> {
    let sin_eta = eta_deg.to_radians().sin();
    tx_spacings
        .iter()
        .map(|s| 2.0 * PI * s / lambda * sin_eta)
        .collect()
}

/// Steering angles and their Tx phase offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringPlan {
    pub angles: Vec<f64>,
    pub phase_offsets: Vec<Vec<f64>>,
}

impl SteeringPlan {
    /// −10° to +10° in 2° steps.
    pub fn default_angles() -> Vec<f64> {
        (-5..=5).map(|i| f64::from(i) * 2.0).collect()
    }

    pub fn new(angles: Vec<f64>, tx_spacings: &[f64], lambda: f64) -> Self {
        let phase_offsets = angles
            .iter()
            .map(|&eta| tx_phase_offsets(eta, tx_spacings, lambda))
            .collect();
        Self {
            angles,
            phase_offsets,
        }
    }

    pub fn iota(&self) -> usize {
        self.angles.len()
    }
}

/// Receive steering vector, element `k` = `exp(j 2π/λ · sin ξ · k s)`.
pub fn steering_vector(xi_deg: f64, kappa: usize, spacing: f64, lambda: f64) -> DVector<Complex64> {
    let step = 2.0 * PI / lambda * xi_deg.to_radians().sin() * spacing;
    DVector::from_iterator(kappa, (0..kappa).map(|k| Complex64::from_polar(1.0, step * k as f64)))
}

/// Sample covariance `X Xᴴ / N` plus diagonal loading
/// `δ = 1e-3 · trace / κ`.
pub fn loaded_covariance(snapshots: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let kappa = snapshots.nrows();
    let n = snapshots.ncols() as f64;
    let mut r = snapshots * snapshots.adjoint() / Complex64::new(n, 0.0);
    let trace: f64 = (0..kappa).map(|i| r[(i, i)].re).sum();
    let delta = DIAGONAL_LOADING * trace / kappa as f64;
    for i in 0..kappa {
        r[(i, i)] += Complex64::new(delta, 0.0);
    }
    r
}

fn factor(r: &DMatrix<Complex64>) -> Result<Cholesky<Complex64, nalgebra::Dyn>, BeamError> {
    if !r.is_square() {
        return Err(BeamError::DimensionMismatch("covariance must be square".into()));
    }
    Cholesky::new(r.clone()).ok_or(BeamError::SingularCovariance)
}

/// Capon weights `w = R⁻¹a / (aᴴR⁻¹a)`.
pub fn capon_weights(r: &DMatrix<Complex64>, a: &DVector<Complex64>) -> Result<DVector<Complex64>, BeamError> {
    if r.nrows() != a.len() {
        return Err(BeamError::DimensionMismatch(format!(
            "covariance {}x{} vs steering vector {}",
            r.nrows(),
            r.ncols(),
            a.len()
        )));
    }
    let chol = factor(r)?;
    let r_inv_a = chol.solve(a);
    let denom = a.dotc(&r_inv_a);
    if !(denom.re > 0.0) || !denom.re.is_finite() {
        return Err(BeamError::SingularCovariance);
    }
    Ok(r_inv_a / denom)
}

/// Capon spatial spectrum over an angle grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AoaSpectrum {
    pub grid: Vec<f64>,
    pub power: Vec<f64>,
    pub aoa: f64,
}

/// Capon AoA estimate from `κ × N` snapshots.
///
/// `power(ξ) = 1 / (aᴴ R̂⁻¹ a)`; the AoA is the arg-max, with near-ties
/// broken toward the smaller `|ξ|` (then the lower angle).
pub fn aoa_estimate(
    snapshots: &DMatrix<Complex64>,
    grid: &AngleGrid,
    array: &RxArray,
) -> Result<AoaSpectrum, BeamError> {
    let kappa = snapshots.nrows();
    if kappa != array.elements {
        return Err(BeamError::DimensionMismatch(format!(
            "snapshots have {kappa} rows, array has {} elements",
            array.elements
        )));
    }
    if snapshots.ncols() < kappa {
        return Err(BeamError::InsufficientSnapshots {
            needed: kappa,
            got: snapshots.ncols(),
        });
    }
    let r = loaded_covariance(snapshots);
    let chol = factor(&r)?;
    let angles = grid.angles();
    let power: Vec<f64> = angles
        .iter()
        .map(|&xi| {
            let a = steering_vector(xi, kappa, array.spacing, array.wavelength);
            1.0 / a.dotc(&chol.solve(&a)).re
        })
        .collect();
    if power.iter().any(|p| !p.is_finite()) {
        return Err(BeamError::SingularCovariance);
    }
    let aoa = pick_peak(&angles, &power);
    Ok(AoaSpectrum {
        grid: angles,
        power,
        aoa,
    })
}

fn pick_peak(angles: &[f64], power: &[f64]) -> f64 {
    let max = power.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = max * (1.0 - TIE_TOLERANCE);
    angles
        .iter()
        .zip(power)
        .filter(|(_, &p)| p >= threshold)
        .map(|(&a, _)| a)
        .min_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)))
        .expect("grid is never empty")
}
