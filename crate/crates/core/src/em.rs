//! Electromagnetic primitives: permittivity models, refractive indices,
//! Fresnel reflection and Snell refraction.
//!
//! Complex quantities use the `exp(-iωt)` time convention, so a lossy medium
//! has a permittivity `ε' + iε''` and a refractive index with a nonnegative
//! imaginary part. Propagation through a thickness `d` then multiplies the
//! field by `exp(i k0 n d)`, which decays.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Static permittivity of water at 20 °C.
pub const WATER_EPS_STATIC: f64 = 80.1;
/// High-frequency permittivity of water at 20 °C.
pub const WATER_EPS_INF: f64 = 5.27;
/// Debye relaxation time of water at 20 °C, seconds.
pub const WATER_RELAXATION_TIME: f64 = 9.4e-12;
/// Permittivity of dry leaf matter.
pub const DRY_MATTER: ComplexPermittivity = ComplexPermittivity {
    real_part: 2.5,
    imag_part: 0.2,
};

const DEBYE_MIN_FREQ: f64 = 1e9;
const DEBYE_MAX_FREQ: f64 = 300e9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmError {
    #[error("total internal reflection: n_i sin(theta_i) / n_t = {ratio} exceeds 1")]
    TotalInternalReflection { ratio: f64 },
    #[error("{what} = {value} outside supported range [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
}

/// Relative complex permittivity `ε' + iε''`; the loss term is stored as a
/// nonnegative number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexPermittivity {
    pub real_part: f64,
    pub imag_part: f64,
}

impl ComplexPermittivity {
    pub const VACUUM: Self = Self {
        real_part: 1.0,
        imag_part: 0.0,
    };

    pub fn new(real_part: f64, imag_part: f64) -> Self {
        Self {
            real_part,
            imag_part,
        }
    }

    pub fn is_physical(&self) -> bool {
        self.real_part >= 1.0 && self.imag_part >= 0.0
    }

    pub fn as_complex(&self) -> Complex64 {
        Complex64::new(self.real_part, self.imag_part)
    }

    pub fn refractive_index(&self) -> RefractiveIndex {
        RefractiveIndex {
            real_scalar: refractive_index_real(*self),
            complex_value: complex_index(*self),
        }
    }
}

/// Refractive index in two forms: the real scalar used by the normal-incidence
/// reflection formula, and the full complex index for oblique work.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefractiveIndex {
    pub real_scalar: f64,
    pub complex_value: Complex64,
}

/// Polarization of the incident field relative to the plane of incidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Polarization {
    /// Electric field perpendicular to the plane of incidence (s / horizontal).
    #[default]
    TE,
    /// Electric field in the plane of incidence (p / vertical).
    TM,
}

/// Real refractive index of a lossy dielectric,
/// `n = sqrt((|ε| + ε') / 2)`.
///
/// This is the real part of the principal square root of `ε`. A literal
/// reading of the typeset formula, `sqrt(|ε|/2 + ε')`, gives `sqrt(1.5)` for
/// vacuum and is not used.
pub fn refractive_index_real(eps: ComplexPermittivity) -> f64 {
    let magnitude = eps.real_part.hypot(eps.imag_part);
    ((magnitude + eps.real_part) / 2.0).sqrt()
}

/// Principal complex square root of the permittivity (imaginary part ≥ 0).
pub fn complex_index(eps: ComplexPermittivity) -> Complex64 {
    passive_sqrt(eps.as_complex())
}

/// Square root on the branch with nonnegative imaginary part.
pub(crate) fn passive_sqrt(z: Complex64) -> Complex64 {
    let root = z.sqrt();
    if root.im < 0.0 {
        -root
    } else {
        root
    }
}

/// Normal-incidence amplitude reflection magnitude against air, `(n-1)/(n+1)`.
pub fn fresnel_normal(n: f64) -> f64 {
    (n - 1.0) / (n + 1.0)
}

/// Refraction angle from Snell's law, `n_i sin θ_i = n_t sin θ_t`.
pub fn snell_refract(n_i: f64, n_t: f64, theta_i: f64) -> Result<f64, EmError> {
    let ratio = n_i * theta_i.sin() / n_t;
    if ratio > 1.0 {
        return Err(EmError::TotalInternalReflection { ratio });
    }
    Ok(ratio.asin())
}

/// Normal component of the normalized wavevector in a medium with index `n`
/// for a wave whose tangential component is `n1 sin θ1` (conserved across
/// planar interfaces).
pub(crate) fn normal_wavenumber(n: Complex64, tangential: Complex64) -> Complex64 {
    passive_sqrt(n * n - tangential * tangential)
}

/// Reflection coefficient between two media given the normal wavenumbers
/// on either side.
pub(crate) fn reflection_from_wavenumbers(
    n1: Complex64,
    n2: Complex64,
    kz1: Complex64,
    kz2: Complex64,
    pol: Polarization,
) -> Complex64 {
    match pol {
        Polarization::TE => (kz1 - kz2) / (kz1 + kz2),
        Polarization::TM => {
            let (e1, e2) = (n1 * n1, n2 * n2);
            (e2 * kz1 - e1 * kz2) / (e2 * kz1 + e1 * kz2)
        }
    }
}

/// Oblique-incidence Fresnel amplitude reflection coefficient for a wave in
/// medium `n1` hitting medium `n2` at angle `theta_i` (radians, measured in
/// medium 1).
///
/// TE uses the electric-field convention, so for real indices at normal
/// incidence it equals `(n1-n2)/(n1+n2)`; TM uses the magnetic-field
/// convention and equals `(n2-n1)/(n2+n1)`. Both have magnitude
/// [`fresnel_normal`] when `n1 = 1`.
pub fn fresnel_oblique(n1: Complex64, n2: Complex64, theta_i: f64, pol: Polarization) -> Complex64 {
    let tangential = n1 * theta_i.sin();
    let kz1 = n1 * theta_i.cos();
    let kz2 = normal_wavenumber(n2, tangential);
    reflection_from_wavenumbers(n1, n2, kz1, kz2, pol)
}

/// Single-Debye permittivity of pure water.
///
/// Only the 20 °C constants are shipped; other temperatures are accepted and
/// evaluated with the same constants.
pub fn debye_water_permittivity(freq: f64, temp_c: f64) -> Result<ComplexPermittivity, EmError> {
    if !(DEBYE_MIN_FREQ..=DEBYE_MAX_FREQ).contains(&freq) {
        return Err(EmError::OutOfRange {
            what: "frequency (Hz)",
            value: freq,
            min: DEBYE_MIN_FREQ,
            max: DEBYE_MAX_FREQ,
        });
    }
    if (temp_c - 20.0).abs() > 0.5 {
        log::debug!("Debye water model evaluated at {temp_c} °C with 20 °C constants");
    }
    Ok(debye_unchecked(freq))
}

fn debye_unchecked(freq: f64) -> ComplexPermittivity {
    let omega_tau = 2.0 * PI * freq * WATER_RELAXATION_TIME;
    let delta = WATER_EPS_STATIC - WATER_EPS_INF;
    let denom = 1.0 + omega_tau * omega_tau;
    ComplexPermittivity {
        real_part: WATER_EPS_INF + delta / denom,
        imag_part: delta * omega_tau / denom,
    }
}

/// Linear volumetric mix of Debye water with dry leaf matter.
pub fn mix_permittivity(water_fraction: f64, freq: f64) -> Result<ComplexPermittivity, EmError> {
    if !(0.0..=1.0).contains(&water_fraction) {
        return Err(EmError::OutOfRange {
            what: "water fraction",
            value: water_fraction,
            min: 0.0,
            max: 1.0,
        });
    }
    let water = debye_water_permittivity(freq, 20.0)?;
    let dry = DRY_MATTER;
    Ok(ComplexPermittivity {
        real_part: water_fraction * water.real_part + (1.0 - water_fraction) * dry.real_part,
        imag_part: water_fraction * water.imag_part + (1.0 - water_fraction) * dry.imag_part,
    })
}
