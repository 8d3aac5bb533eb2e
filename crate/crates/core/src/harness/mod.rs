//! Experiment driver: dataset synthesis, cross-validation, ablations, raw
//! capture ingest and metric export.

mod config;
mod experiment;
mod ingest;
mod metrics;
mod simulate;

pub use config::{ExperimentConfig, OutputPaths, PlacementJitter, SplitKind};
pub use experiment::{
    angle_sweep, centered_subset, cmd_angle_sweep, cmd_eval, cmd_train, cross_validate, run_fold, train_experiment,
    CvRun, EvalReport, FoldRun, ModelBundle,
};
pub use ingest::{cmd_ingest, ingest};
pub use metrics::{mae, AblationRow, AngleCurvePoint, FoldMetrics, MetricsReport, VariantMetrics};
pub use simulate::{
    cmd_simulate, frame_meta, manifest, placement_scene, process_frame, sample_from_frames, simulate,
    simulate_frames, simulate_sample, simulate_with_dump, SampleSlot, SimulateOutput,
};

use crate::features::FeatureError;
use crate::leaf::LeafError;
use crate::lmnet::LmError;
use crate::radar::raw::RawFormatError;
use crate::radar::RadarError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("empty input")]
    EmptyInput,
    #[error("{pred} predictions for {target} targets")]
    LengthMismatch { pred: usize, target: usize },
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: LmError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Leaf(#[from] LeafError),
    #[error(transparent)]
    Radar(#[from] RadarError),
    #[error(transparent)]
    Raw(#[from] RawFormatError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] LmError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// Stable machine-readable kind, for CLI error output.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "ConfigError",
            HarnessError::EmptyInput => "EmptyInput",
            HarnessError::LengthMismatch { .. } => "LengthMismatch",
            HarnessError::Fold { source: LmError::Diverged { .. }, .. } => "Diverged",
            HarnessError::Fold { .. } | HarnessError::Model(_) => "ModelError",
            HarnessError::Io(_) => "IoError",
            HarnessError::Leaf(_) => "LeafError",
            HarnessError::Radar(_) => "RadarError",
            HarnessError::Raw(e) => match e {
                RawFormatError::BadMagic => "BadMagic",
                RawFormatError::ConfigDigestMismatch => "ConfigDigestMismatch",
                RawFormatError::TruncatedFrame { .. } => "TruncatedFrame",
                RawFormatError::Io(_) => "IoError",
                _ => "RawFormatError",
            },
            HarnessError::Feature(_) => "FeatureError",
            HarnessError::Json(_) => "JsonError",
            HarnessError::Csv(_) => "CsvError",
        }
    }
}
