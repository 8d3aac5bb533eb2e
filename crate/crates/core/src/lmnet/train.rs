use super::model::{mse, Batch, LmNet, Mode, ModelParams, Variant};
use super::optim::{step_lr, AdamW, AdamWConfig};
use super::{bucket_mae, BucketMae, LmError};
use crate::features::FeatureSample;
use crate::rng;
use ndarray::Array1;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    /// Multiplicative learning-rate decay ...
    pub lr_decay: f64,
    /// ... applied every this many epochs.
    pub decay_every: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Non-improving validation epochs tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.005,
            weight_decay: 1e-5,
            lr_decay: 0.8,
            decay_every: 2,
            batch_size: 256,
            max_epochs: 80,
            patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LmError> {
        if !(self.lr > 0.0) || self.batch_size == 0 || self.max_epochs == 0 || !(self.weight_decay >= 0.0) {
            return Err(LmError::InvalidConfig(format!(
                "lr {} batch {} epochs {} weight decay {}",
                self.lr, self.batch_size, self.max_epochs, self.weight_decay
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub validation_loss: f64,
    /// Share of training rows with both fusion gates zero.
    pub dead_gate_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub variant: Variant,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub stopped_early: bool,
    /// Share of training rows where both fusion gates were zero, over the
    /// last epoch.
    pub dead_gate_rate: f64,
    /// Validation MAE of the returned parameters, per RWC bucket.
    pub validation_buckets: Vec<BucketMae>,
}

fn refs<'a>(samples: &'a [FeatureSample], idx: &[usize]) -> Vec<&'a FeatureSample> {
    idx.iter().map(|&i| &samples[i]).collect()
}

/// Eval-mode predictions in chunks of `chunk` samples.
pub fn predict_samples(net: &LmNet, samples: &[FeatureSample], chunk: usize) -> Result<Vec<f64>, LmError> {
    let mut out = Vec::with_capacity(samples.len());
    for part in samples.chunks(chunk.max(1)) {
        let b = Batch::from_samples(&part.iter().collect::<Vec<_>>())?;
        out.extend(net.predict(&b)?);
    }
    Ok(out)
}

/// Trains on `train`, selecting the epoch with the lowest validation MSE.
/// Inputs are expected to be scaled already. The regression bias starts at
/// the mean training target.
pub fn train(
    train: &[FeatureSample],
    validation: &[FeatureSample],
    cfg: &TrainConfig,
    variant: Variant,
) -> Result<(LmNet, TrainReport), LmError> {
    cfg.validate()?;
    let first = train.first().ok_or(LmError::EmptySplit("training"))?;
    if validation.is_empty() {
        return Err(LmError::EmptySplit("validation"));
    }
    let mut init_rng = rng::substream(cfg.seed, rng::INIT, &[]);
    let mut params = ModelParams::init(first.iota, first.kappa, &mut init_rng);
    params.regression.bias[0] = train.iter().map(|s| s.rwc).sum::<f64>() / train.len() as f64;
    let mut net = LmNet::new(params, variant);
    let mut opt = AdamW::new(
        &net.params,
        AdamWConfig {
            weight_decay: cfg.weight_decay,
            ..AdamWConfig::default()
        },
    );
    let val_targets: Array1<f64> = validation.iter().map(|s| s.rwc).collect();

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::new();
    let mut best = (f64::INFINITY, 0usize, net.clone());
    let mut waited = 0;
    let mut stopped_early = false;
    let mut dead_gate_rate = 0.0;
    for epoch in 0..cfg.max_epochs {
        let lr = step_lr(cfg.lr, cfg.lr_decay, cfg.decay_every, epoch);
        order.sort_unstable();
        order.shuffle(&mut rng::substream(cfg.seed, rng::SHUFFLE, &[epoch as u64]));
        let mut loss_sum = 0.0;
        let mut dead_rows = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let batch = Batch::from_samples(&refs(train, idx))?;
            let cache = net.forward(&batch, Mode::Train)?;
            let loss = mse(&cache.predictions, &batch.targets);
            if !loss.is_finite() {
                return Err(LmError::Diverged { epoch });
            }
            loss_sum += loss * idx.len() as f64;
            dead_rows += cache.dead_gate_rate() * idx.len() as f64;
            let grads = net.backward(&batch, &cache);
            opt.step(&mut net.params, &grads, lr);
        }
        // A moving average over a handful of steps per epoch lags the weights,
        // so evaluation uses the exact training-set statistics instead.
        let full = Batch::from_samples(&train.iter().collect::<Vec<_>>())?;
        let cache = net.forward(&full, Mode::Train)?;
        net.set_running_stats(&cache);
        dead_gate_rate = dead_rows / train.len() as f64;
        let train_loss = loss_sum / train.len() as f64;
        let preds = Array1::from(predict_samples(&net, validation, cfg.batch_size)?);
        let validation_loss = mse(&preds, &val_targets);
        if !validation_loss.is_finite() || !net.params.is_finite() {
            return Err(LmError::Diverged { epoch });
        }
        log::debug!("epoch {epoch}: lr {lr:.2e} train {train_loss:.4} validation {validation_loss:.4}");
        epochs.push(EpochLog {
            epoch,
            lr,
            train_loss,
            validation_loss,
            dead_gate_rate,
        });
        if validation_loss < best.0 {
            best = (validation_loss, epoch, net.clone());
            waited = 0;
        } else {
            waited += 1;
            if waited > cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    if dead_gate_rate > 0.0 {
        log::info!("both fusion gates zero on {:.1}% of rows", 100.0 * dead_gate_rate);
    }
    let (best_validation_loss, best_epoch, net) = best;
    let preds = predict_samples(&net, validation, cfg.batch_size)?;
    let targets: Vec<f64> = validation.iter().map(|s| s.rwc).collect();
    let report = TrainReport {
        variant,
        epochs,
        best_epoch,
        best_validation_loss,
        stopped_early,
        dead_gate_rate,
        validation_buckets: bucket_mae(&preds, &targets),
    };
    Ok((net, report))
}
