use super::model::ModelParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

/// First and second moments for one flat tensor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    pub fn zeros(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One AdamW update of a flat tensor at step `t` (1-based). Weight decay
/// shrinks the parameter directly by `lr·wd` before the adaptive step.
pub fn adamw_update(p: &mut [f64], g: &[f64], state: &mut Moments, t: u64, lr: f64, cfg: &AdamWConfig) {
    let bc1 = 1.0 - cfg.beta1.powf(t as f64);
    let bc2 = 1.0 - cfg.beta2.powf(t as f64);
    let decay = 1.0 - lr * cfg.weight_decay;
    for (((p, &g), m), v) in p.iter_mut().zip(g).zip(&mut state.m).zip(&mut state.v) {
        *p *= decay;
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// AdamW state for a whole model.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub cfg: AdamWConfig,
    pub t: u64,
    pub moments: Vec<Moments>,
}

impl AdamW {
    pub fn new(params: &ModelParams, cfg: AdamWConfig) -> Self {
        Self {
            cfg,
            t: 0,
            moments: params.tensors().iter().map(|(_, t)| Moments::zeros(t.len())).collect(),
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) {
        self.t += 1;
        let grads = grads.tensors();
        for ((p, (_, g)), st) in params.tensors_mut().into_iter().zip(grads).zip(&mut self.moments) {
            adamw_update(p, g, st, self.t, lr, &self.cfg);
        }
    }
}

/// Step decay: `lr · factor^(epoch / every)`.
pub fn step_lr(base: f64, factor: f64, every: usize, epoch: usize) -> f64 {
    base * factor.powi((epoch / every.max(1)) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut p = vec![1.5, -2.0];
        let mut st = Moments::zeros(2);
        adamw_update(&mut p, &[0.0, 0.0], &mut st, 1, 0.01, &cfg);
        assert_eq!(p, vec![1.5, -2.0]);
    }

    #[test]
    fn zero_gradient_with_decay_shrinks_by_lr_wd() {
        let cfg = AdamWConfig {
            weight_decay: 0.1,
            ..AdamWConfig::default()
        };
        let mut p = vec![2.0];
        let mut st = Moments::zeros(1);
        adamw_update(&mut p, &[0.0], &mut st, 1, 0.5, &cfg);
        assert_eq!(p[0], 2.0 * (1.0 - 0.5 * 0.1));
    }

    #[test]
    fn scalar_quadratic_converges() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let target = 1.5;
        let mut x = vec![0.0];
        let mut st = Moments::zeros(1);
        for t in 1..=500 {
            let g = 2.0 * (x[0] - target);
            adamw_update(&mut x, &[g], &mut st, t, 0.05, &cfg);
        }
        assert!((x[0] - target).abs() < 1e-3, "{}", x[0]);
    }

    #[test]
    fn step_schedule() {
        assert_eq!(step_lr(0.005, 0.8, 2, 0), 0.005);
        assert_eq!(step_lr(0.005, 0.8, 2, 1), 0.005);
        assert!((step_lr(0.005, 0.8, 2, 2) - 0.004).abs() < 1e-15);
        assert!((step_lr(0.005, 0.8, 2, 5) - 0.005 * 0.64).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn first_step_moves_by_at_most_lr(p0 in -10.0f64..10.0, g in -1e3f64..1e3, lr in 1e-4f64..1e-1) {
            let cfg = AdamWConfig { weight_decay: 0.0, ..AdamWConfig::default() };
            let mut p = vec![p0];
            let mut st = Moments::zeros(1);
            adamw_update(&mut p, &[g], &mut st, 1, lr, &cfg);
            prop_assert!((p[0] - p0).abs() <= lr * (1.0 + 1e-9));
        }
    }
}
