//! Two-layer leaf model: palisade over spongy tissue, surface roughness, and
//! the split of the backscattered field into a surface term (top interface)
//! and a volumetric term (paths returning from the internal boundaries).
//!
//! The volumetric term keeps one bounce per boundary below the surface: the
//! palisade/spongy interface and the spongy/air back face. Multiple
//! reverberations inside a layer are dropped; each extra pass crosses a lossy
//! layer twice more.

use crate::em::{
    self, normal_wavenumber, reflection_from_wavenumbers, ComplexPermittivity, EmError, Polarization,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Largest supported incidence magnitude.
pub const MAX_INCIDENCE: f64 = 60.0 * PI / 180.0;
/// Floor used when an RCS of exactly zero amplitude is converted to dBsm.
pub const RCS_FLOOR_DBSM: f64 = -300.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LeafError {
    #[error("invalid leaf spec: {0}")]
    InvalidSpec(String),
    #[error("RWC {0}% outside [0, 100]")]
    RwcOutOfRange(f64),
    #[error("incidence angle {0} rad outside ±60°")]
    AngleOutOfRange(f64),
    #[error(transparent)]
    Em(#[from] EmError),
}

/// Geometry and tissue description of a leaf at full turgor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafSpec {
    /// Extent along the radar's elevation axis, m.
    pub length: f64,
    /// Extent along the azimuth axis, m.
    pub width: f64,
    pub total_thickness: f64,
    /// Share of the thickness occupied by the palisade layer.
    pub palisade_fraction: f64,
    /// RMS surface height, m.
    pub roughness_sigma: f64,
    /// Lateral coherence length of the surface, m. Sets the width of the
    /// specular lobe.
    pub correlation_length: f64,
    /// Palisade water volume fraction at 100% RWC.
    pub turgid_water_fraction_palisade: f64,
}

impl Default for LeafSpec {
    fn default() -> Self {
        Self {
            length: 0.12,
            width: 0.07,
            total_thickness: 0.3e-3,
            palisade_fraction: 0.4,
            roughness_sigma: 0.45e-3,
            correlation_length: 5e-3,
            turgid_water_fraction_palisade: 0.8,
        }
    }
}

impl LeafSpec {
    pub fn validate(&self) -> Result<(), LeafError> {
        let bad = |m: &str| Err(LeafError::InvalidSpec(m.to_owned()));
        if !(self.length > 0.0 && self.width > 0.0 && self.total_thickness > 0.0) {
            return bad("dimensions must be positive");
        }
        if !(self.palisade_fraction > 0.0 && self.palisade_fraction < 1.0) {
            return bad("palisade_fraction must lie in (0, 1)");
        }
        if !(self.roughness_sigma >= 0.0) {
            return bad("roughness_sigma must be nonnegative");
        }
        if !(self.correlation_length > 0.0) {
            return bad("correlation_length must be positive");
        }
        if !(0.0..=1.0).contains(&self.turgid_water_fraction_palisade) {
            return bad("turgid_water_fraction_palisade must lie in [0, 1]");
        }
        Ok(())
    }

    /// Elliptical leaf outline area, m².
    pub fn area(&self) -> f64 {
        PI / 4.0 * self.length * self.width
    }

    pub fn palisade_thickness(&self) -> f64 {
        self.total_thickness * self.palisade_fraction
    }

    pub fn spongy_thickness(&self) -> f64 {
        self.total_thickness * (1.0 - self.palisade_fraction)
    }
}

/// Leaf species profiles used by the experiment presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LeafType {
    /// Large, smooth leaf.
    Avocado,
    /// Small, smooth leaf.
    Rubra,
    /// Large leaf with a rough (λ/32-exceeding) surface.
    BullBay,
}

impl LeafType {
    pub const ALL: [LeafType; 3] = [LeafType::Avocado, LeafType::Rubra, LeafType::BullBay];

    /// Calibrated presets. Roughness values were fixed once against the RSS
    /// monotonicity and flatness checks and are not tuned per run.
    pub fn preset(self) -> LeafSpec {
        let base = LeafSpec::default();
        match self {
            LeafType::Avocado => LeafSpec {
                length: 0.15,
                width: 0.08,
                roughness_sigma: 0.03e-3,
                correlation_length: 6e-3,
                ..base
            },
            LeafType::Rubra => LeafSpec {
                length: 0.08,
                width: 0.04,
                roughness_sigma: 0.02e-3,
                correlation_length: 5e-3,
                ..base
            },
            LeafType::BullBay => LeafSpec {
                length: 0.16,
                width: 0.07,
                roughness_sigma: 0.48e-3,
                correlation_length: 4e-3,
                ..base
            },
        }
    }

    pub fn code(self) -> u32 {
        match self {
            LeafType::Avocado => 0,
            LeafType::Rubra => 1,
            LeafType::BullBay => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.code() == code)
    }
}

/// Palisade and spongy water fractions at a given RWC.
///
/// The spongy fraction scales linearly with RWC from a quarter of the turgid
/// palisade fraction. The palisade fraction falls linearly from its turgid
/// value at 100% to the spongy value at 50% and tracks the spongy value below.
pub fn layer_water_fractions(rwc: f64, spec: &LeafSpec) -> (f64, f64) {
    let turgid_palisade = spec.turgid_water_fraction_palisade;
    let turgid_spongy = turgid_palisade / 4.0;
    let spongy = turgid_spongy * rwc / 100.0;
    let palisade = if rwc >= 50.0 {
        let floor = turgid_spongy * 0.5;
        let t = (rwc - 50.0) / 50.0;
        turgid_palisade * t + floor * (1.0 - t)
    } else {
        spongy
    };
    (palisade, spongy)
}

/// A leaf at a specific relative water content.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafState {
    pub spec: LeafSpec,
    pub rwc: f64,
    pub water_fraction_palisade: f64,
    pub water_fraction_spongy: f64,
}

impl LeafState {
    pub fn new(spec: LeafSpec, rwc: f64) -> Result<Self, LeafError> {
        spec.validate()?;
        if !(0.0..=100.0).contains(&rwc) {
            return Err(LeafError::RwcOutOfRange(rwc));
        }
        let (palisade, spongy) = layer_water_fractions(rwc, &spec);
        Ok(Self {
            spec,
            rwc,
            water_fraction_palisade: palisade,
            water_fraction_spongy: spongy,
        })
    }

    /// Layer stack (palisade, spongy) with an air backing.
    pub fn stack(&self, freq: f64) -> Result<LayerStack, LeafError> {
        Ok(LayerStack {
            layers: vec![
                Layer {
                    permittivity: em::mix_permittivity(self.water_fraction_palisade, freq)?,
                    thickness: self.spec.palisade_thickness(),
                },
                Layer {
                    permittivity: em::mix_permittivity(self.water_fraction_spongy, freq)?,
                    thickness: self.spec.spongy_thickness(),
                },
            ],
            backing: ComplexPermittivity::VACUUM,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layer {
    pub permittivity: ComplexPermittivity,
    pub thickness: f64,
}

/// Planar layers illuminated from air, terminated by a semi-infinite backing.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    pub layers: Vec<Layer>,
    pub backing: ComplexPermittivity,
}

/// Reflection coefficients split by path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reflection {
    /// Top-interface reflection, including the coherent roughness loss.
    pub surface: Complex64,
    /// Top-interface reflection of the same surface polished smooth.
    pub smooth_surface: Complex64,
    /// Sum of the single-bounce paths from every deeper boundary.
    pub volumetric: Complex64,
    pub total: Complex64,
    /// Roughness factor applied to the surface term.
    pub roughness: f64,
}

/// First-order reflection of a layer stack at incidence `theta` from air.
///
/// Each boundary below the surface contributes the round-trip transmission
/// through every interface above it (`1 - r²` per interface), its own
/// reflection coefficient, and the two-way propagation factor of every layer
/// crossed.
pub fn stack_reflection(
    stack: &LayerStack,
    theta: f64,
    freq: f64,
    pol: Polarization,
    roughness: f64,
) -> Reflection {
    let k0 = 2.0 * PI * freq / SPEED_OF_LIGHT;
    let tangential = Complex64::new(theta.sin(), 0.0);
    let air = Complex64::new(1.0, 0.0);

    let mut indices = vec![air];
    indices.extend(stack.layers.iter().map(|l| em::complex_index(l.permittivity)));
    indices.push(em::complex_index(stack.backing));
    let kz: Vec<Complex64> = indices
        .iter()
        .map(|&n| normal_wavenumber(n, tangential))
        .collect();

    let interface = |i: usize| reflection_from_wavenumbers(indices[i], indices[i + 1], kz[i], kz[i + 1], pol);

    let top = interface(0);
    let surface = top * roughness;
    let mut volumetric = Complex64::new(0.0, 0.0);
    // Accumulated two-way transmission and propagation down to boundary b.
    let mut path = Complex64::new(1.0, 0.0);
    let mut r_above = top;
    for (j, layer) in stack.layers.iter().enumerate() {
        let phase = Complex64::new(0.0, 2.0 * k0 * layer.thickness) * kz[j + 1];
        path *= (1.0 - r_above * r_above) * phase.exp();
        let r_here = interface(j + 1);
        volumetric += path * r_here;
        r_above = r_here;
    }
    Reflection {
        surface,
        smooth_surface: top,
        volumetric,
        total: surface + volumetric,
        roughness,
    }
}

/// Coherent (specular) field retained by a Gaussian rough surface,
/// `exp(-(4πσ cosθ / λ)² / 2)`.
pub fn roughness_factor(sigma: f64, theta: f64, lambda: f64) -> f64 {
    let phase = 4.0 * PI * sigma * theta.cos() / lambda;
    (-phase * phase / 2.0).exp()
}

fn check_angle(theta: f64) -> Result<f64, LeafError> {
    if !theta.is_finite() || theta.abs() > MAX_INCIDENCE + 1e-12 {
        return Err(LeafError::AngleOutOfRange(theta));
    }
    Ok(theta.abs())
}

/// Reflection of the two-layer leaf at incidence `theta` (the response is
/// symmetric in the sign of `theta`).
pub fn multilayer_reflection(
    state: &LeafState,
    theta: f64,
    freq: f64,
    pol: Polarization,
) -> Result<Reflection, LeafError> {
    let theta = check_angle(theta)?;
    let lambda = SPEED_OF_LIGHT / freq;
    let stack = state.stack(freq)?;
    let rho = roughness_factor(state.spec.roughness_sigma, theta, lambda);
    Ok(stack_reflection(&stack, theta, freq, pol, rho))
}

/// Normalized monostatic physical-optics pattern of a flat facet of
/// coherence length `ell`: `cosθ · sinc(k ℓ sinθ)`, with `k = 2π/λ`.
pub fn plate_pattern(theta: f64, ell: f64, lambda: f64) -> f64 {
    let x = 2.0 * PI / lambda * ell * theta.sin();
    let sinc = if x.abs() < 1e-12 { 1.0 } else { x.sin() / x };
    theta.cos() * sinc
}

/// Monostatic leaf echo and RCS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterResult {
    /// Surface reflection scaled by the plate pattern.
    pub surface_amplitude: Complex64,
    /// Surface term without the coherent roughness loss.
    pub smooth_surface_amplitude: Complex64,
    pub volumetric_amplitude: Complex64,
    pub total_amplitude: Complex64,
    pub rcs_surface: f64,
    pub rcs_volumetric: f64,
    pub rcs_total: f64,
    pub roughness: f64,
}

fn to_dbsm(peak_rcs: f64, amplitude: Complex64) -> f64 {
    let rcs = peak_rcs * amplitude.norm_sqr();
    if rcs > 0.0 {
        (10.0 * rcs.log10()).max(RCS_FLOOR_DBSM)
    } else {
        RCS_FLOOR_DBSM
    }
}

/// Monostatic RCS of the leaf at incidence `theta`.
///
/// Amplitudes are reflection coefficients multiplied by the normalized plate
/// pattern, so they plug directly into the Friis echo amplitude. The dBsm
/// values apply the flat-plate peak `4π A² / λ²` for the leaf outline area.
pub fn rcs(state: &LeafState, theta: f64, freq: f64, pol: Polarization) -> Result<ScatterResult, LeafError> {
    let refl = multilayer_reflection(state, theta, freq, pol)?;
    let lambda = SPEED_OF_LIGHT / freq;
    let pattern = plate_pattern(theta, state.spec.correlation_length, lambda);
    let area = state.spec.area();
    let peak = 4.0 * PI * area * area / (lambda * lambda);
    let surface = refl.surface * pattern;
    let volumetric = refl.volumetric * pattern;
    let total = surface + volumetric;
    Ok(ScatterResult {
        surface_amplitude: surface,
        smooth_surface_amplitude: refl.smooth_surface * pattern,
        volumetric_amplitude: volumetric,
        total_amplitude: total,
        rcs_surface: to_dbsm(peak, surface),
        rcs_volumetric: to_dbsm(peak, volumetric),
        rcs_total: to_dbsm(peak, total),
        roughness: refl.roughness,
    })
}
