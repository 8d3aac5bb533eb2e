use super::{HarnessError, SplitKind};
use crate::leaf::LeafType;
use crate::lmnet::{bucket_mae, BucketMae, Variant};
use serde::{Deserialize, Serialize};

/// Mean absolute error, in the units of the inputs.
pub fn mae(pred: &[f64], target: &[f64]) -> Result<f64, HarnessError> {
    if pred.len() != target.len() {
        return Err(HarnessError::LengthMismatch {
            pred: pred.len(),
            target: target.len(),
        });
    }
    if pred.is_empty() {
        return Err(HarnessError::EmptyInput);
    }
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    /// Held-out distance for leave-one-distance-out folds.
    pub held_out_distance: Option<f64>,
    pub n_fit: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub mae: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub dead_gate_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantMetrics {
    pub variant: Variant,
    /// Pooled over every test prediction.
    pub mae: f64,
    pub buckets: Vec<BucketMae>,
    pub folds: Vec<FoldMetrics>,
}

impl VariantMetrics {
    pub fn new(variant: Variant, pred: &[f64], target: &[f64], folds: Vec<FoldMetrics>) -> Result<Self, HarnessError> {
        Ok(Self {
            variant,
            mae: mae(pred, target)?,
            buckets: bucket_mae(pred, target),
            folds,
        })
    }

    /// Count-weighted mean of the bucket MAEs.
    pub fn bucket_weighted_mae(&self) -> f64 {
        let n: usize = self.buckets.iter().map(|b| b.count).sum();
        let s: f64 = self
            .buckets
            .iter()
            .filter_map(|b| b.mae.map(|m| m * b.count as f64))
            .sum();
        s / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub mae: f64,
    /// `mae / mae(Full) − 1`, when Full was trained.
    pub relative_to_full: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleCurvePoint {
    pub count: usize,
    pub angles: Vec<f64>,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub leaf_type: LeafType,
    pub samples: usize,
    pub iota: usize,
    pub kappa: usize,
    pub split: SplitKind,
    pub seed: u64,
    pub variants: Vec<VariantMetrics>,
    pub ablation: Vec<AblationRow>,
    pub angle_curve: Vec<AngleCurvePoint>,
}

impl MetricsReport {
    pub fn variant(&self, v: Variant) -> Option<&VariantMetrics> {
        self.variants.iter().find(|m| m.variant == v)
    }

    pub fn ablation_table(variants: &[VariantMetrics]) -> Vec<AblationRow> {
        let full = variants.iter().find(|m| m.variant == Variant::Full).map(|m| m.mae);
        variants
            .iter()
            .map(|m| AblationRow {
                variant: m.variant,
                mae: m.mae,
                relative_to_full: full.map(|f| m.mae / f - 1.0),
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<Vec<u8>, HarnessError> {
        let mut v = serde_json::to_vec_pretty(self)?;
        v.push(b'\n');
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mae_basics() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[51.0, 63.0], &[50.0, 60.0]).unwrap(), 2.0);
        assert!(matches!(mae(&[], &[]), Err(HarnessError::EmptyInput)));
        assert!(matches!(mae(&[1.0], &[]), Err(HarnessError::LengthMismatch { .. })));
    }

    proptest! {
        #[test]
        fn buckets_aggregate_to_overall(
            pairs in prop::collection::vec((50.0f64..=100.0, -20.0f64..20.0), 1..200)
        ) {
            let target: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let pred: Vec<f64> = pairs.iter().map(|p| p.0 + p.1).collect();
            let m = VariantMetrics::new(Variant::Full, &pred, &target, Vec::new()).unwrap();
            prop_assert!(m.mae >= 0.0);
            prop_assert_eq!(m.buckets.iter().map(|b| b.count).sum::<usize>(), pred.len());
            prop_assert!((m.bucket_weighted_mae() - m.mae).abs() <= 1e-12 * m.mae.max(1.0));
        }
    }
}
