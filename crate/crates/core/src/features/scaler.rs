use super::{FeatureError, FeatureSample};
use serde::{Deserialize, Serialize};

/// Optional invertible transform of the RWC target. Off by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetTransform {
    #[default]
    Identity,
    /// Yeo-Johnson power transform followed by a z-score.
    YeoJohnson { lambda: f64, mean: f64, std: f64 },
}

fn yeo_johnson(y: f64, lambda: f64) -> f64 {
    if y >= 0.0 {
        if lambda.abs() < 1e-12 {
            y.ln_1p()
        } else {
            ((y + 1.0).powf(lambda) - 1.0) / lambda
        }
    } else if (lambda - 2.0).abs() < 1e-12 {
        -(-y).ln_1p()
    } else {
        -((1.0 - y).powf(2.0 - lambda) - 1.0) / (2.0 - lambda)
    }
}

fn yeo_johnson_inverse(x: f64, lambda: f64) -> f64 {
    if x >= 0.0 {
        if lambda.abs() < 1e-12 {
            x.exp_m1()
        } else {
            (x * lambda + 1.0).powf(1.0 / lambda) - 1.0
        }
    } else if (lambda - 2.0).abs() < 1e-12 {
        1.0 - (-x).exp()
    } else {
        1.0 - (1.0 - (2.0 - lambda) * x).powf(1.0 / (2.0 - lambda))
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn yeo_johnson_log_likelihood(ys: &[f64], lambda: f64) -> f64 {
    let n = ys.len() as f64;
    let (_, std) = mean_std(ys.iter().map(|&y| yeo_johnson(y, lambda)));
    let jacobian: f64 = ys.iter().map(|&y| y.signum() * y.abs().ln_1p()).sum();
    -n / 2.0 * (std * std).ln() + (lambda - 1.0) * jacobian
}

impl TargetTransform {
    /// Maximum-likelihood λ on [−2, 4] by golden-section search.
    pub fn fit_yeo_johnson(ys: &[f64]) -> Self {
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (-2.0f64, 4.0f64);
        let f = |l: f64| -yeo_johnson_log_likelihood(ys, l);
        let mut c = b - phi * (b - a);
        let mut d = a + phi * (b - a);
        for _ in 0..100 {
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
            c = b - phi * (b - a);
            d = a + phi * (b - a);
        }
        let lambda = (a + b) / 2.0;
        let (mean, std) = mean_std(ys.iter().map(|&y| yeo_johnson(y, lambda)));
        TargetTransform::YeoJohnson {
            lambda,
            mean,
            std: if std > 0.0 { std } else { 1.0 },
        }
    }

    pub fn forward(&self, y: f64) -> f64 {
        match *self {
            TargetTransform::Identity => y,
            TargetTransform::YeoJohnson { lambda, mean, std } => (yeo_johnson(y, lambda) - mean) / std,
        }
    }

    pub fn inverse(&self, z: f64) -> f64 {
        match *self {
            TargetTransform::Identity => z,
            TargetTransform::YeoJohnson { lambda, mean, std } => yeo_johnson_inverse(z * std + mean, lambda),
        }
    }
}

/// Per-feature z-score fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Zero-variance features, passed through unscaled.
    pub degenerate: Vec<usize>,
    /// Dataset indices the statistics were computed from, sorted.
    pub fitted_on: Vec<usize>,
    pub target: TargetTransform,
}

impl Scaler {
    pub fn fit(samples: &[FeatureSample], train: &[usize], power_target: bool) -> Result<Self, FeatureError> {
        if train.len() < 2 {
            return Err(FeatureError::TooFewSamples {
                needed: 2,
                got: train.len(),
            });
        }
        let rows: Vec<Vec<f64>> = train.iter().map(|&i| samples[i].flatten()).collect();
        let width = rows[0].len();
        if rows.iter().any(|r| r.len() != width) {
            return Err(FeatureError::ShapeMismatch("training samples differ in size".into()));
        }
        let mut mean = Vec::with_capacity(width);
        let mut std = Vec::with_capacity(width);
        let mut degenerate = Vec::new();
        for j in 0..width {
            let (m, s) = mean_std(rows.iter().map(|r| r[j]));
            if s <= 1e-12 * m.abs().max(1.0) {
                degenerate.push(j);
                mean.push(0.0);
                std.push(1.0);
            } else {
                mean.push(m);
                std.push(s);
            }
        }
        if !degenerate.is_empty() {
            log::warn!("{} zero-variance features passed through unscaled: {:?}", degenerate.len(), degenerate);
        }
        let target = if power_target {
            let ys: Vec<f64> = train.iter().map(|&i| samples[i].rwc).collect();
            TargetTransform::fit_yeo_johnson(&ys)
        } else {
            TargetTransform::Identity
        };
        let mut fitted_on = train.to_vec();
        fitted_on.sort_unstable();
        Ok(Self {
            mean,
            std,
            degenerate,
            fitted_on,
            target,
        })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    /// Scales the inputs and transforms the target of a sample.
    pub fn apply_sample(&self, s: &FeatureSample) -> FeatureSample {
        let mut out = s.with_flat(&self.apply(&s.flatten()));
        out.rwc = self.target.forward(s.rwc);
        out
    }

    /// Fails if any evaluation index was used for fitting.
    pub fn check_disjoint(&self, eval: &[usize]) -> Result<(), FeatureError> {
        match eval.iter().find(|i| self.fitted_on.binary_search(i).is_ok()) {
            Some(&i) => Err(FeatureError::Leakage(i)),
            None => Ok(()),
        }
    }
}
