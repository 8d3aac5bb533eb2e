//! LM-Net regression network with hand-written gradients and AdamW.

mod checkpoint;
mod gradcheck;
mod model;
mod optim;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use gradcheck::{gradient_check, relative_error, GroupCheck};
pub use model::{
    mse, Batch, Dense, ForwardCache, GateOverride, LmNet, Mode, ModelParams, Norm, Stage, Variant, BN_EPS,
    BN_MOMENTUM, FEATURE_WIDTH, FUSION_GATE_INIT, FUSION_HIDDEN, LOCATION_WIDTHS, RSS_WIDTHS,
};
pub use optim::{adamw_update, step_lr, AdamW, AdamWConfig, Moments};
pub use train::{predict_samples, train, EpochLog, TrainConfig, TrainReport};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum LmError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// RWC reporting buckets: [50,60), [60,70), [70,80), [80,90), [90,100].
pub const BUCKET_EDGES: [f64; 6] = [50.0, 60.0, 70.0, 80.0, 90.0, 100.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketMae {
    pub low: f64,
    pub high: f64,
    pub count: usize,
    /// `None` when the bucket is empty.
    pub mae: Option<f64>,
}

pub fn bucket_of(rwc: f64) -> Option<usize> {
    if !(BUCKET_EDGES[0]..=BUCKET_EDGES[5]).contains(&rwc) {
        return None;
    }
    Some((0..5).find(|&i| rwc < BUCKET_EDGES[i + 1]).unwrap_or(4))
}

/// Mean absolute error per bucket of the true RWC.
pub fn bucket_mae(pred: &[f64], target: &[f64]) -> Vec<BucketMae> {
    let mut sums = [0.0; 5];
    let mut counts = [0usize; 5];
    for (p, t) in pred.iter().zip(target) {
        if let Some(b) = bucket_of(*t) {
            sums[b] += (p - t).abs();
            counts[b] += 1;
        }
    }
    (0..5)
        .map(|i| BucketMae {
            low: BUCKET_EDGES[i],
            high: BUCKET_EDGES[i + 1],
            count: counts[i],
            mae: (counts[i] > 0).then(|| sums[i] / counts[i] as f64),
        })
        .collect()
}
