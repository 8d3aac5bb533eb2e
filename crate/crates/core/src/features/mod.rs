//! Per-measurement feature tensors, normalization and split protocols.

mod dataset;
mod scaler;
mod split;

pub use dataset::{read_dataset, write_dataset, write_features_csv, Dataset, DatasetManifest, DATASET_MAGIC};
pub use scaler::{Scaler, TargetTransform};
pub use split::{kfold_split, logo_split, validation_split, Fold};

use crate::beam::{self, AngleGrid, BeamError, RxArray};
use crate::radar::{self, RadarError, RangeProfile};
use serde::{Deserialize, Serialize};

/// Columns of one row of the location block.
pub const LOCATION_WIDTH: usize = 5;
/// Range bins in the leaf information zone.
pub const ZONE_BINS: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("no capture for steering angle {0}°")]
    MissingAngle(f64),
    #[error("steering angle {0}° captured more than once or not in the plan")]
    UnexpectedAngle(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid weights: fresh {fresh} g, turgid {turgid} g")]
    InvalidWeight { fresh: f64, turgid: f64 },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("non-finite feature value")]
    NonFinite,
    #[error("scaler was fitted on sample {0}, which is in the evaluation split")]
    Leakage(usize),
    #[error("dataset format: {0}")]
    Format(String),
    #[error(transparent)]
    Radar(#[from] RadarError),
    #[error(transparent)]
    Beam(#[from] BeamError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// `RWC = fresh / turgid × 100`.
pub fn rwc_from_weights(fresh: f64, turgid: f64) -> Result<f64, FeatureError> {
    if !(turgid > 0.0) || !(0.0..=turgid).contains(&fresh) {
        return Err(FeatureError::InvalidWeight { fresh, turgid });
    }
    Ok(fresh / turgid * 100.0)
}

/// Leaf-zone measurements taken at one steering angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleCapture {
    pub steering_angle: f64,
    /// Capon AoA at bins t−1, t, t+1, degrees.
    pub aoa: [f64; ZONE_BINS],
    /// dBFS, `[rx][bin]`.
    pub rss: Vec<f64>,
}

/// Runs the leaf-zone gate and Capon AoA on one range profile.
pub fn extract_capture(
    profile: &RangeProfile,
    steering_angle: f64,
    d_t: f64,
    grid: &AngleGrid,
    array: &RxArray,
) -> Result<AngleCapture, FeatureError> {
    let zone = radar::leaf_zone(profile, d_t)?;
    let mut aoa = [0.0; ZONE_BINS];
    for (a, &bin) in aoa.iter_mut().zip(&zone) {
        *a = beam::aoa_estimate(&profile.snapshots(bin), grid, array)?.aoa;
    }
    let mut rss = Vec::with_capacity(profile.rx_count * ZONE_BINS);
    for k in 0..profile.rx_count {
        rss.extend(zone.iter().map(|&b| profile.power_dbfs[profile.offset(k, b)]));
    }
    Ok(AngleCapture {
        steering_angle,
        aoa,
        rss,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleGroup {
    pub leaf_id: u32,
    pub distance: f64,
}

/// One labelled measurement: every steering angle of one leaf placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSample {
    pub iota: usize,
    pub kappa: usize,
    /// `ι × 5`: η, AoA at t−1, t, t+1, distance.
    pub location: Vec<f64>,
    /// `ι × κ × 3` dBFS.
    pub rss: Vec<f64>,
    pub rwc: f64,
    pub group: SampleGroup,
}

impl FeatureSample {
    pub fn rss_width(&self) -> usize {
        self.kappa * ZONE_BINS
    }

    pub fn input_len(&self) -> usize {
        self.location.len() + self.rss.len()
    }

    pub fn steering_angles(&self) -> Vec<f64> {
        self.location.iter().step_by(LOCATION_WIDTH).copied().collect()
    }

    pub fn location_row(&self, a: usize) -> &[f64] {
        &self.location[a * LOCATION_WIDTH..(a + 1) * LOCATION_WIDTH]
    }

    pub fn rss_row(&self, a: usize) -> &[f64] {
        let w = self.rss_width();
        &self.rss[a * w..(a + 1) * w]
    }

    /// Location block followed by the RSS block.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.location.clone();
        v.extend_from_slice(&self.rss);
        v
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn with_flat(&self, flat: &[f64]) -> Self {
        let (loc, rss) = flat.split_at(self.location.len());
        Self {
            location: loc.to_vec(),
            rss: rss.to_vec(),
            ..self.clone()
        }
    }

    /// Keeps only the steering angles whose indices are listed.
    pub fn select_angles(&self, keep: &[usize]) -> Self {
        let mut location = Vec::with_capacity(keep.len() * LOCATION_WIDTH);
        let mut rss = Vec::with_capacity(keep.len() * self.rss_width());
        for &a in keep {
            location.extend_from_slice(self.location_row(a));
            rss.extend_from_slice(self.rss_row(a));
        }
        Self {
            iota: keep.len(),
            location,
            rss,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.location.len() != self.iota * LOCATION_WIDTH || self.rss.len() != self.iota * self.rss_width() {
            return Err(FeatureError::ShapeMismatch(format!(
                "ι={} κ={} with {} location and {} RSS values",
                self.iota,
                self.kappa,
                self.location.len(),
                self.rss.len()
            )));
        }
        if !self.location.iter().chain(&self.rss).all(|v| v.is_finite()) || !self.rwc.is_finite() {
            return Err(FeatureError::NonFinite);
        }
        Ok(())
    }
}

/// Stored tensors are 32-bit; rounding here keeps in-memory samples equal to
/// what a dataset file reads back.
fn f32_round(v: f64) -> f64 {
    f64::from(v as f32)
}

/// Assembles a sample from one capture per planned steering angle. Captures
/// may arrive in any order; rows are stored by ascending angle.
pub fn build_sample(
    captures: &[AngleCapture],
    plan: &[f64],
    d_t: f64,
    rwc: f64,
    group: SampleGroup,
) -> Result<FeatureSample, FeatureError> {
    let mut angles = plan.to_vec();
    angles.sort_by(f64::total_cmp);
    if angles.is_empty() {
        return Err(FeatureError::ShapeMismatch("empty steering plan".into()));
    }
    let kappa = captures
        .first()
        .map(|c| c.rss.len() / ZONE_BINS)
        .ok_or(FeatureError::MissingAngle(angles[0]))?;
    for c in captures {
        if angles.iter().filter(|&&a| a == c.steering_angle).count() != 1
            || captures.iter().filter(|o| o.steering_angle == c.steering_angle).count() != 1
        {
            return Err(FeatureError::UnexpectedAngle(c.steering_angle));
        }
        if c.rss.len() != kappa * ZONE_BINS || kappa == 0 {
            return Err(FeatureError::ShapeMismatch(format!(
                "capture at {}° has {} RSS values",
                c.steering_angle,
                c.rss.len()
            )));
        }
    }
    let mut location = Vec::with_capacity(angles.len() * LOCATION_WIDTH);
    let mut rss = Vec::with_capacity(angles.len() * kappa * ZONE_BINS);
    for &eta in &angles {
        let c = captures
            .iter()
            .find(|c| c.steering_angle == eta)
            .ok_or(FeatureError::MissingAngle(eta))?;
        location.extend([eta, c.aoa[0], c.aoa[1], c.aoa[2], d_t].map(f32_round));
        rss.extend(c.rss.iter().map(|&v| f32_round(v)));
    }
    let sample = FeatureSample {
        iota: angles.len(),
        kappa,
        location,
        rss,
        rwc: f32_round(rwc),
        group: SampleGroup {
            leaf_id: group.leaf_id,
            distance: f32_round(group.distance),
        },
    };
    sample.validate()?;
    Ok(sample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn capture(eta: f64, kappa: usize) -> AngleCapture {
        AngleCapture {
            steering_angle: eta,
            aoa: [eta - 1.0, eta, eta + 1.0],
            rss: (0..kappa * ZONE_BINS).map(|i| -40.0 - i as f64 - eta).collect(),
        }
    }

    fn group() -> SampleGroup {
        SampleGroup {
            leaf_id: 1,
            distance: 0.6,
        }
    }

    #[test]
    fn rwc_examples() {
        assert_eq!(rwc_from_weights(2.0, 2.0).unwrap(), 100.0);
        assert_eq!(rwc_from_weights(1.0, 2.0).unwrap(), 50.0);
        assert!(matches!(rwc_from_weights(0.0, 0.0), Err(FeatureError::InvalidWeight { .. })));
        assert!(matches!(rwc_from_weights(3.0, 2.0), Err(FeatureError::InvalidWeight { .. })));
    }

    #[test]
    fn default_plan_gives_187_inputs() {
        let plan = beam::SteeringPlan::default_angles();
        let caps: Vec<_> = plan.iter().map(|&e| capture(e, 4)).collect();
        let s = build_sample(&caps, &plan, 0.6, 80.0, group()).unwrap();
        assert_eq!(s.input_len(), 187);
        assert_eq!(s.location.len(), 55);
        assert_eq!(s.steering_angles(), plan);
    }

    #[test]
    fn single_angle() {
        let s = build_sample(&[capture(0.0, 4)], &[0.0], 0.6, 80.0, group()).unwrap();
        assert_eq!(s.input_len(), 5 + 4 * 3);
    }

    #[test]
    fn missing_and_unexpected_angles() {
        let plan = [-2.0, 0.0, 2.0];
        let caps = [capture(-2.0, 4), capture(2.0, 4)];
        assert!(matches!(
            build_sample(&caps, &plan, 0.6, 80.0, group()),
            Err(FeatureError::MissingAngle(a)) if a == 0.0
        ));
        let caps = [capture(-2.0, 4), capture(0.0, 4), capture(2.0, 4), capture(4.0, 4)];
        assert!(matches!(
            build_sample(&caps, &plan, 0.6, 80.0, group()),
            Err(FeatureError::UnexpectedAngle(_))
        ));
    }

    #[test]
    fn angle_subset_keeps_rows() {
        let plan = beam::SteeringPlan::default_angles();
        let caps: Vec<_> = plan.iter().map(|&e| capture(e, 4)).collect();
        let s = build_sample(&caps, &plan, 0.6, 80.0, group()).unwrap();
        let mid = s.select_angles(&[5]);
        assert_eq!(mid.iota, 1);
        assert_eq!(mid.location_row(0), s.location_row(5));
        assert_eq!(mid.rss_row(0), s.rss_row(5));
        assert_eq!(s.with_flat(&s.flatten()), s);
    }

    proptest! {
        #[test]
        fn capture_order_does_not_matter(perm in Just((0..11usize).collect::<Vec<_>>()).prop_shuffle()) {
            let plan = beam::SteeringPlan::default_angles();
            let caps: Vec<_> = plan.iter().map(|&e| capture(e, 4)).collect();
            let shuffled: Vec<_> = perm.iter().map(|&i| caps[i].clone()).collect();
            let a = build_sample(&caps, &plan, 0.6, 80.0, group()).unwrap();
            let b = build_sample(&shuffled, &plan, 0.6, 80.0, group()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
