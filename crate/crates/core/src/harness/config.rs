use super::HarnessError;
use crate::beam::AngleGrid;
use crate::em::Polarization;
use crate::leaf::LeafType;
use crate::lmnet::{TrainConfig, Variant};
use crate::radar::{BackgroundReflector, ChirpConfig, MAX_AZIMUTH_OFFSET, MAX_DISTANCE, MIN_DISTANCE};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Per-placement perturbation bounds; each is drawn uniformly in `±bound`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementJitter {
    pub azimuth_deg: f64,
    pub aspect_deg: f64,
    pub distance_m: f64,
}

impl Default for PlacementJitter {
    fn default() -> Self {
        Self {
            azimuth_deg: 5.0,
            aspect_deg: 5.0,
            distance_m: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    /// Stratified k-fold; `folds` sets k.
    #[default]
    Kfold,
    /// Each distance held out in turn.
    LogoDistance,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    /// Directory for datasets, reports, curves and checkpoints.
    pub dir: PathBuf,
    /// Also write every simulated frame to this raw capture file.
    pub raw_dump: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub leaf_type: LeafType,
    pub rwc_levels: Vec<f64>,
    pub placements_per_level: usize,
    pub distances: Vec<f64>,
    pub steering_angles: Vec<f64>,
    pub seed: u64,
    /// SNR of a unit mirror at the leaf distance, dB; `null` is noise-free.
    pub snr_db: Option<f64>,
    pub polarization: Polarization,
    pub jitter: PlacementJitter,
    pub background_reflectors: Vec<BackgroundReflector>,
    pub chirp: ChirpConfig,
    pub aoa_grid: AngleGrid,
    /// Optimizer settings. The per-fold seed is derived from `seed`.
    pub train: TrainConfig,
    pub split: SplitKind,
    pub folds: usize,
    pub variants: Vec<Variant>,
    /// Share of each training fold held back for early stopping.
    pub validation_fraction: f64,
    /// Yeo-Johnson transform of the target before training.
    pub power_target: bool,
    /// Steering-angle subset sizes for the angle sweep, each at most the
    /// dataset's ι.
    pub angle_counts: Vec<usize>,
    pub output: OutputPaths,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            leaf_type: LeafType::Avocado,
            rwc_levels: (5..=10).map(|i| f64::from(i) * 10.0).collect(),
            placements_per_level: 20,
            distances: vec![0.4, 0.6, 0.8],
            steering_angles: crate::beam::SteeringPlan::default_angles(),
            seed: 0,
            snr_db: Some(30.0),
            polarization: Polarization::TE,
            jitter: PlacementJitter::default(),
            background_reflectors: Vec::new(),
            chirp: ChirpConfig::default(),
            aoa_grid: AngleGrid::default(),
            train: TrainConfig::default(),
            split: SplitKind::Kfold,
            folds: 10,
            variants: vec![Variant::Full],
            validation_fraction: 0.1,
            power_target: false,
            angle_counts: vec![1, 3, 5, 7, 9, 11],
            output: OutputPaths {
                dir: PathBuf::from("out"),
                raw_dump: None,
            },
        }
    }
}

fn bad(msg: String) -> HarnessError {
    HarnessError::Config(msg)
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn sample_count(&self) -> usize {
        self.rwc_levels.len() * self.placements_per_level * self.distances.len()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.rwc_levels.is_empty() || self.rwc_levels.iter().any(|r| !(0.0..=100.0).contains(r)) {
            return Err(bad(format!("RWC levels {:?} must be non-empty and in [0, 100]", self.rwc_levels)));
        }
        if self.placements_per_level == 0 {
            return Err(bad("placements_per_level must be positive".into()));
        }
        let j = &self.jitter;
        if !(j.azimuth_deg >= 0.0 && j.aspect_deg >= 0.0 && j.distance_m >= 0.0) || !j.aspect_deg.is_finite() {
            return Err(bad(format!("jitter bounds must be non-negative: {j:?}")));
        }
        if j.azimuth_deg > MAX_AZIMUTH_OFFSET {
            return Err(bad(format!("azimuth jitter {}° beyond ±{MAX_AZIMUTH_OFFSET}°", j.azimuth_deg)));
        }
        let reach = MIN_DISTANCE + j.distance_m..=MAX_DISTANCE - j.distance_m;
        if self.distances.is_empty() || self.distances.iter().any(|d| !reach.contains(d)) {
            return Err(bad(format!(
                "distances {:?} must be non-empty and, with jitter, inside [{MIN_DISTANCE}, {MAX_DISTANCE}] m",
                self.distances
            )));
        }
        let mut angles = self.steering_angles.clone();
        angles.sort_by(f64::total_cmp);
        angles.dedup();
        if angles.is_empty()
            || angles.len() != self.steering_angles.len()
            || angles.iter().any(|a| !(a.abs() < 90.0))
        {
            return Err(bad(format!("steering angles {:?} must be distinct and within ±90°", self.steering_angles)));
        }
        if self.snr_db.is_some_and(|s| !s.is_finite()) {
            return Err(bad("snr_db must be finite or null".into()));
        }
        self.chirp.validate().map_err(|e| bad(e.to_string()))?;
        AngleGrid::new(self.aoa_grid.start_deg, self.aoa_grid.stop_deg, self.aoa_grid.step_deg)
            .map_err(|e| bad(e.to_string()))?;
        self.train.validate().map_err(|e| bad(e.to_string()))?;
        if self.folds < 2 {
            return Err(bad(format!("need at least 2 folds, got {}", self.folds)));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(bad(format!("validation fraction {} outside (0, 1)", self.validation_fraction)));
        }
        if self.variants.is_empty() {
            return Err(bad("no model variants requested".into()));
        }
        if self.angle_counts.contains(&0) {
            return Err(bad("angle count 0".into()));
        }
        Ok(())
    }
}
