use super::metrics::{mae, AngleCurvePoint, FoldMetrics, MetricsReport, VariantMetrics};
use super::{ExperimentConfig, HarnessError, SplitKind};
use crate::features::{kfold_split, logo_split, validation_split, Dataset, FeatureSample, Fold, Scaler};
use crate::lmnet::{
    bucket_mae, predict_samples, read_checkpoint, train, write_checkpoint, BucketMae, LmNet, TrainConfig,
    TrainReport, Variant,
};
use crate::rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

/// A trained network with the scaler its inputs need.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub net: LmNet,
    pub scaler: Scaler,
}

impl ModelBundle {
    fn scaler_path(checkpoint: &Path) -> PathBuf {
        checkpoint.with_extension("scaler.json")
    }

    /// Writes `path` (checkpoint) and `path` with extension `scaler.json`.
    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        write_checkpoint(BufWriter::new(File::create(path)?), &self.net)?;
        std::fs::write(Self::scaler_path(path), serde_json::to_vec(&self.scaler)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let net = read_checkpoint(BufReader::new(File::open(path)?))?;
        let scaler = serde_json::from_slice(&std::fs::read(Self::scaler_path(path))?)?;
        Ok(Self { net, scaler })
    }

    /// Predictions in percent RWC.
    pub fn predict(&self, samples: &[FeatureSample]) -> Result<Vec<f64>, HarnessError> {
        let scaled: Vec<FeatureSample> = samples.iter().map(|s| self.scaler.apply_sample(s)).collect();
        let z = predict_samples(&self.net, &scaled, 256)?;
        Ok(z.into_iter().map(|v| self.scaler.target.inverse(v)).collect())
    }
}

pub struct FoldRun {
    pub test: Vec<usize>,
    pub predictions: Vec<f64>,
    pub model: ModelBundle,
    pub report: TrainReport,
    pub metrics: FoldMetrics,
}

pub struct CvRun {
    pub folds: Vec<FoldRun>,
    pub metrics: VariantMetrics,
}

fn make_folds(samples: &[FeatureSample], split: SplitKind, cfg: &ExperimentConfig) -> Result<Vec<Fold>, HarnessError> {
    Ok(match split {
        SplitKind::Kfold => kfold_split(samples, cfg.folds, cfg.seed)?,
        SplitKind::LogoDistance => logo_split(samples)?,
    })
}

/// Fits the scaler on the training fold, trains with early stopping on a
/// stratified slice of it and predicts the test fold.
pub fn run_fold(
    samples: &[FeatureSample],
    fold: &Fold,
    index: usize,
    split: SplitKind,
    variant: Variant,
    cfg: &ExperimentConfig,
) -> Result<FoldRun, HarnessError> {
    let scaler = Scaler::fit(samples, &fold.train, cfg.power_target)?;
    scaler.check_disjoint(&fold.test)?;
    let key = [index as u64, u64::from(variant.code())];
    let (fit, val) = validation_split(
        samples,
        &fold.train,
        cfg.validation_fraction,
        rng::child_seed(cfg.seed, "validation", &key[..1]),
    );
    let scaled = |idx: &[usize]| -> Vec<FeatureSample> { idx.iter().map(|&i| scaler.apply_sample(&samples[i])).collect() };
    let train_cfg = TrainConfig {
        seed: rng::child_seed(cfg.seed, "fold", &key),
        ..cfg.train.clone()
    };
    let (net, report) = train(&scaled(&fit), &scaled(&val), &train_cfg, variant)
        .map_err(|source| HarnessError::Fold { fold: index, source })?;
    let model = ModelBundle { net, scaler };
    let test: Vec<FeatureSample> = fold.test.iter().map(|&i| samples[i].clone()).collect();
    let predictions = model.predict(&test)?;
    let targets: Vec<f64> = test.iter().map(|s| s.rwc).collect();
    let metrics = FoldMetrics {
        fold: index,
        held_out_distance: (split == SplitKind::LogoDistance).then(|| test[0].group.distance),
        n_fit: fit.len(),
        n_validation: val.len(),
        n_test: test.len(),
        mae: mae(&predictions, &targets)?,
        best_epoch: report.best_epoch,
        epochs_run: report.epochs.len(),
        stopped_early: report.stopped_early,
        dead_gate_rate: report.dead_gate_rate,
    };
    Ok(FoldRun {
        test: fold.test.clone(),
        predictions,
        model,
        report,
        metrics,
    })
}

/// Trains and evaluates one variant on every fold of `split`.
pub fn cross_validate(
    samples: &[FeatureSample],
    split: SplitKind,
    variant: Variant,
    cfg: &ExperimentConfig,
) -> Result<CvRun, HarnessError> {
    let folds = make_folds(samples, split, cfg)?;
    let runs = folds
        .par_iter()
        .enumerate()
        .map(|(i, f)| run_fold(samples, f, i, split, variant, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let mut pred = Vec::with_capacity(samples.len());
    let mut target = Vec::with_capacity(samples.len());
    for r in &runs {
        pred.extend_from_slice(&r.predictions);
        target.extend(r.test.iter().map(|&i| samples[i].rwc));
    }
    let metrics = VariantMetrics::new(variant, &pred, &target, runs.iter().map(|r| r.metrics.clone()).collect())?;
    Ok(CvRun { folds: runs, metrics })
}

fn report_for(ds: &Dataset, cfg: &ExperimentConfig, split: SplitKind, variants: Vec<VariantMetrics>) -> MetricsReport {
    MetricsReport {
        leaf_type: ds.manifest.leaf_type,
        samples: ds.samples.len(),
        iota: ds.manifest.iota,
        kappa: ds.manifest.kappa,
        split,
        seed: cfg.seed,
        ablation: MetricsReport::ablation_table(&variants),
        variants,
        angle_curve: Vec::new(),
    }
}

/// Cross-validates every configured variant. Returns the report and the
/// per-variant runs.
pub fn train_experiment(ds: &Dataset, cfg: &ExperimentConfig) -> Result<(MetricsReport, Vec<CvRun>), HarnessError> {
    cfg.validate()?;
    let runs = cfg
        .variants
        .iter()
        .map(|&v| cross_validate(&ds.samples, cfg.split, v, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let report = report_for(ds, cfg, cfg.split, runs.iter().map(|r| r.metrics.clone()).collect());
    Ok((report, runs))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, HarnessError> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

/// Writes `report.json`, `curves.csv`, `predictions.csv` and one checkpoint
/// per variant and fold under `checkpoints/`.
pub fn cmd_train(ds: &Dataset, cfg: &ExperimentConfig, out: &Path) -> Result<MetricsReport, HarnessError> {
    let (report, runs) = train_experiment(ds, cfg)?;
    let ckpt_dir = out.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir)?;
    let mut curves = csv_writer(&out.join("curves.csv"))?;
    curves.write_record(["variant", "fold", "epoch", "lr", "train_loss", "validation_loss"])?;
    let mut preds = csv_writer(&out.join("predictions.csv"))?;
    preds.write_record(["variant", "fold", "sample", "distance", "rwc", "prediction"])?;
    for (run, &variant) in runs.iter().zip(&cfg.variants) {
        for (k, fold) in run.folds.iter().enumerate() {
            let name = variant.name();
            for e in &fold.report.epochs {
                curves.serialize((name, k, e.epoch, e.lr, e.train_loss, e.validation_loss))?;
            }
            for (&i, p) in fold.test.iter().zip(&fold.predictions) {
                let s = &ds.samples[i];
                preds.serialize((name, k, i, s.group.distance, s.rwc, p))?;
            }
            fold.model.save(&ckpt_dir.join(format!("{name}_fold{k}.lfnn")))?;
        }
    }
    curves.flush()?;
    preds.flush()?;
    std::fs::write(out.join("report.json"), report.to_json()?)?;
    Ok(report)
}

/// Indices of the `count` angles closest to boresight, ascending. Ties in
/// `|η|` go to the negative angle first.
pub fn centered_subset(angles: &[f64], count: usize) -> Result<Vec<usize>, HarnessError> {
    if count == 0 || count > angles.len() {
        return Err(HarnessError::Config(format!("angle count {count} outside 1..={}", angles.len())));
    }
    let mut idx: Vec<usize> = (0..angles.len()).collect();
    idx.sort_by(|&a, &b| angles[a].abs().total_cmp(&angles[b].abs()).then(angles[a].total_cmp(&angles[b])));
    idx.truncate(count);
    idx.sort_by(|&a, &b| angles[a].total_cmp(&angles[b]));
    Ok(idx)
}

/// Retrains the first configured variant on centered angle subsets.
pub fn angle_sweep(ds: &Dataset, cfg: &ExperimentConfig) -> Result<MetricsReport, HarnessError> {
    cfg.validate()?;
    let variant = cfg.variants[0];
    for &count in &cfg.angle_counts {
        centered_subset(&ds.manifest.steering_angles, count)?;
    }
    let mut curve = Vec::with_capacity(cfg.angle_counts.len());
    let mut variants = Vec::new();
    for &count in &cfg.angle_counts {
        let keep = centered_subset(&ds.manifest.steering_angles, count)?;
        let sub = ds.select_angles(&keep);
        let run = cross_validate(&sub.samples, cfg.split, variant, cfg)?;
        curve.push(AngleCurvePoint {
            count,
            angles: sub.manifest.steering_angles.clone(),
            mae: run.metrics.mae,
        });
        if count == ds.manifest.iota {
            variants.push(run.metrics);
        }
    }
    let mut report = report_for(ds, cfg, cfg.split, variants);
    report.angle_curve = curve;
    Ok(report)
}

/// Writes `angle_sweep.json` and `angle_curve.csv`.
pub fn cmd_angle_sweep(ds: &Dataset, cfg: &ExperimentConfig, out: &Path) -> Result<MetricsReport, HarnessError> {
    let report = angle_sweep(ds, cfg)?;
    std::fs::create_dir_all(out)?;
    let mut w = csv_writer(&out.join("angle_curve.csv"))?;
    w.write_record(["count", "mae"])?;
    for p in &report.angle_curve {
        w.serialize((p.count, p.mae))?;
    }
    w.flush()?;
    std::fs::write(out.join("angle_sweep.json"), report.to_json()?)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub mae: f64,
    pub buckets: Vec<BucketMae>,
    pub predictions: Vec<f64>,
}

/// Scores a saved model on a dataset and writes `eval.json`.
pub fn cmd_eval(ds: &Dataset, model: &Path, out: &Path) -> Result<EvalReport, HarnessError> {
    let bundle = ModelBundle::load(model)?;
    let predictions = bundle.predict(&ds.samples)?;
    let targets: Vec<f64> = ds.samples.iter().map(|s| s.rwc).collect();
    let report = EvalReport {
        samples: targets.len(),
        mae: mae(&predictions, &targets)?,
        buckets: bucket_mae(&predictions, &targets),
        predictions,
    };
    std::fs::create_dir_all(out)?;
    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');
    std::fs::write(out.join("eval.json"), json)?;
    Ok(report)
}
