use super::LmError;
use crate::features::{FeatureSample, LOCATION_WIDTH};
use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const LOCATION_WIDTHS: [usize; 5] = [16, 64, 128, 256, 256];
pub const RSS_WIDTHS: [usize; 4] = [64, 128, 256, 256];
pub const FEATURE_WIDTH: usize = 256;
const ZERO_INIT_REGRESSION: bool = true;
/// Initial bias of the fusion-head output unit.
pub const FUSION_GATE_INIT: f64 = 1.0;
pub const FUSION_HIDDEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Both extractors with learned per-angle fusion gates.
    #[default]
    Full,
    /// Both extractors summed with fixed unit gates.
    RssPlusAng,
    /// RSS extractor and regression only.
    RssOnly,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::RssPlusAng, Variant::RssOnly];

    pub fn code(self) -> u32 {
        match self {
            Variant::Full => 0,
            Variant::RssPlusAng => 1,
            Variant::RssOnly => 2,
        }
    }

    pub fn from_code(c: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.code() == c)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::RssPlusAng => "rss_plus_ang",
            Variant::RssOnly => "rss_only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in every batch-norm layer.
    Train,
    /// Running statistics.
    Eval,
}

/// Affine map applied to each row: `y = x W + b`, `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn init<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Self {
            weight: Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..=bound)),
            bias: Array1::from_shape_simple_fn(fan_out, || rng.random_range(-bound..=bound)),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.len()),
        }
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }
}

/// Per-feature batch normalization over all rows of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Norm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl Norm {
    fn new(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }

    fn zeros_like(&self) -> Self {
        let w = self.gamma.len();
        Self {
            gamma: Array1::zeros(w),
            beta: Array1::zeros(w),
            running_mean: Array1::zeros(w),
            running_var: Array1::zeros(w),
        }
    }
}

/// Affine → batch norm → ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub dense: Dense,
    pub norm: Norm,
}

/// Every tensor of the network. Gradients and optimizer moments reuse this
/// type; their running statistics stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub iota: usize,
    pub kappa: usize,
    pub location: Vec<Stage>,
    pub rss: Vec<Stage>,
    pub fusion_a: [Dense; 2],
    pub fusion_r: [Dense; 2],
    pub regression: Dense,
}

fn stages<R: Rng>(input: usize, widths: &[usize], rng: &mut R) -> Vec<Stage> {
    let mut fan_in = input;
    widths
        .iter()
        .map(|&w| {
            let s = Stage {
                dense: Dense::init(fan_in, w, rng),
                norm: Norm::new(w),
            };
            fan_in = w;
            s
        })
        .collect()
}

impl ModelParams {
    pub fn init<R: Rng>(iota: usize, kappa: usize, rng: &mut R) -> Self {
        let location = stages(LOCATION_WIDTH, &LOCATION_WIDTHS, rng);
        let rss = stages(kappa * crate::features::ZONE_BINS, &RSS_WIDTHS, rng);
        // Gates start at exactly FUSION_GATE_INIT for every row.
        let head = |rng: &mut R| {
            let hidden = Dense::init(FEATURE_WIDTH, FUSION_HIDDEN, rng);
            let mut out = Dense::init(FUSION_HIDDEN, 1, rng);
            out.weight.fill(0.0);
            out.bias[0] = FUSION_GATE_INIT;
            [hidden, out]
        };
        let fusion_a = head(rng);
        let fusion_r = head(rng);
        let mut regression = Dense::init(iota * FEATURE_WIDTH, 1, rng);
        if ZERO_INIT_REGRESSION {
            regression.weight.fill(0.0);
        }
        Self {
            iota,
            kappa,
            location,
            rss,
            fusion_a,
            fusion_r,
            regression,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |v: &Vec<Stage>| {
            v.iter()
                .map(|s| Stage {
                    dense: s.dense.zeros_like(),
                    norm: s.norm.zeros_like(),
                })
                .collect()
        };
        Self {
            iota: self.iota,
            kappa: self.kappa,
            location: z(&self.location),
            rss: z(&self.rss),
            fusion_a: [self.fusion_a[0].zeros_like(), self.fusion_a[1].zeros_like()],
            fusion_r: [self.fusion_r[0].zeros_like(), self.fusion_r[1].zeros_like()],
            regression: self.regression.zeros_like(),
        }
    }

    /// Trainable tensors with names, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for (branch, st) in [("location", &self.location), ("rss", &self.rss)] {
            for (i, s) in st.iter().enumerate() {
                out.push((format!("{branch}.{i}.weight"), slice_of(&s.dense.weight)));
                out.push((format!("{branch}.{i}.bias"), s.dense.bias.as_slice().expect("contiguous")));
                out.push((format!("{branch}.{i}.gamma"), s.norm.gamma.as_slice().expect("contiguous")));
                out.push((format!("{branch}.{i}.beta"), s.norm.beta.as_slice().expect("contiguous")));
            }
        }
        for (head, d) in [("fusion_a", &self.fusion_a), ("fusion_r", &self.fusion_r)] {
            for (i, l) in d.iter().enumerate() {
                out.push((format!("{head}.{i}.weight"), slice_of(&l.weight)));
                out.push((format!("{head}.{i}.bias"), l.bias.as_slice().expect("contiguous")));
            }
        }
        out.push(("regression.weight".into(), slice_of(&self.regression.weight)));
        out.push(("regression.bias".into(), self.regression.bias.as_slice().expect("contiguous")));
        out
    }

    /// Mutable view of the trainable tensors, same order as [`tensors`](Self::tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for st in [&mut self.location, &mut self.rss] {
            for s in st.iter_mut() {
                out.push(s.dense.weight.as_slice_mut().expect("contiguous"));
                out.push(s.dense.bias.as_slice_mut().expect("contiguous"));
                out.push(s.norm.gamma.as_slice_mut().expect("contiguous"));
                out.push(s.norm.beta.as_slice_mut().expect("contiguous"));
            }
        }
        for d in [&mut self.fusion_a, &mut self.fusion_r] {
            for l in d.iter_mut() {
                out.push(l.weight.as_slice_mut().expect("contiguous"));
                out.push(l.bias.as_slice_mut().expect("contiguous"));
            }
        }
        out.push(self.regression.weight.as_slice_mut().expect("contiguous"));
        out.push(self.regression.bias.as_slice_mut().expect("contiguous"));
        out
    }

    /// Running means and variances of every batch-norm layer.
    pub fn running_stats(&self) -> Vec<&Array1<f64>> {
        self.location
            .iter()
            .chain(&self.rss)
            .flat_map(|s| [&s.norm.running_mean, &s.norm.running_var])
            .collect()
    }

    pub fn running_stats_mut(&mut self) -> Vec<&mut Array1<f64>> {
        self.location
            .iter_mut()
            .chain(self.rss.iter_mut())
            .flat_map(|s| [&mut s.norm.running_mean, &mut s.norm.running_var])
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
            && self.running_stats().iter().all(|a| a.iter().all(|v| v.is_finite()))
    }
}

fn slice_of(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("contiguous")
}

/// Row-stacked inputs of a batch: `B·ι` rows, sample-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub iota: usize,
    pub location: Array2<f64>,
    pub rss: Array2<f64>,
    pub targets: Array1<f64>,
}

impl Batch {
    pub fn from_samples(samples: &[&FeatureSample]) -> Result<Self, LmError> {
        let first = samples.first().ok_or_else(|| LmError::ShapeMismatch("empty batch".into()))?;
        let (iota, kappa) = (first.iota, first.kappa);
        let rw = first.rss_width();
        let mut loc = Vec::with_capacity(samples.len() * iota * LOCATION_WIDTH);
        let mut rss = Vec::with_capacity(samples.len() * iota * rw);
        for s in samples {
            if s.iota != iota || s.kappa != kappa || s.validate().is_err() {
                return Err(LmError::ShapeMismatch(format!(
                    "sample ι={} κ={} in a ι={iota} κ={kappa} batch",
                    s.iota, s.kappa
                )));
            }
            loc.extend_from_slice(&s.location);
            rss.extend_from_slice(&s.rss);
        }
        let rows = samples.len() * iota;
        Ok(Self {
            iota,
            location: Array2::from_shape_vec((rows, LOCATION_WIDTH), loc).expect("sized"),
            rss: Array2::from_shape_vec((rows, rw), rss).expect("sized"),
            targets: samples.iter().map(|s| s.rwc).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

struct StageCache {
    input: Array2<f64>,
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    /// Post-norm, pre-ReLU values.
    pre: Array2<f64>,
    mean: Array1<f64>,
    var: Array1<f64>,
}

struct HeadCache {
    input: Array2<f64>,
    hidden_pre: Array2<f64>,
    hidden: Array2<f64>,
    out_pre: Array2<f64>,
}

/// Intermediate values kept for the backward pass.
pub struct ForwardCache {
    location: Vec<StageCache>,
    rss: Vec<StageCache>,
    f_a: Option<Array2<f64>>,
    f_r: Array2<f64>,
    head_a: Option<HeadCache>,
    head_r: Option<HeadCache>,
    omega_a: Array1<f64>,
    omega_r: Array1<f64>,
    fused: Array2<f64>,
    pub predictions: Array1<f64>,
}

impl ForwardCache {
    /// Signs of every ReLU input; two passes with equal patterns lie on the
    /// same linear piece of the network.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for c in self.location.iter().chain(&self.rss) {
            out.extend(c.pre.iter().map(|&v| v > 0.0));
        }
        for h in self.head_a.iter().chain(&self.head_r) {
            out.extend(h.hidden_pre.iter().map(|&v| v > 0.0));
            out.extend(h.out_pre.iter().map(|&v| v > 0.0));
        }
        out
    }

    /// Share of (sample, angle) rows where both fusion gates are zero.
    pub fn dead_gate_rate(&self) -> f64 {
        let dead = self
            .omega_a
            .iter()
            .zip(&self.omega_r)
            .filter(|(a, r)| **a == 0.0 && **r == 0.0)
            .count();
        dead as f64 / self.omega_a.len().max(1) as f64
    }
}

/// Fixed values that replace the learned gates, for ablations and tests.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GateOverride {
    pub omega_a: Option<f64>,
    pub omega_r: Option<f64>,
}

/// LM-Net: a location extractor and an RSS extractor applied to each
/// steering-angle row, per-row fusion gates `ω_a`, `ω_r` from two small
/// heads, `F_m = ω_a·F_a + ω_r·F_r`, and a regression over the flattened
/// `ι × 256` fused tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct LmNet {
    pub params: ModelParams,
    pub variant: Variant,
    pub gates: GateOverride,
}

fn stage_forward(stage: &Stage, x: Array2<f64>, mode: Mode) -> (Array2<f64>, StageCache) {
    let z = stage.dense.apply(&x);
    let (mean, var) = match mode {
        Mode::Train => {
            let mean = z.mean_axis(Axis(0)).expect("nonempty batch");
            let var = z.var_axis(Axis(0), 0.0);
            (mean, var)
        }
        Mode::Eval => (stage.norm.running_mean.clone(), stage.norm.running_var.clone()),
    };
    let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
    let xhat = (z - &mean) * &inv_std;
    let pre = &xhat * &stage.norm.gamma + &stage.norm.beta;
    let out = pre.mapv(|v| v.max(0.0));
    (
        out,
        StageCache {
            input: x,
            xhat,
            inv_std,
            pre,
            mean,
            var,
        },
    )
}

fn extractor_forward(stages: &[Stage], x: &Array2<f64>, mode: Mode) -> (Array2<f64>, Vec<StageCache>) {
    let mut caches = Vec::with_capacity(stages.len());
    let mut h = x.clone();
    for s in stages {
        let (out, c) = stage_forward(s, h, mode);
        caches.push(c);
        h = out;
    }
    (h, caches)
}

fn head_forward(head: &[Dense; 2], f: &Array2<f64>) -> (Array1<f64>, HeadCache) {
    let hidden_pre = head[0].apply(f);
    let hidden = hidden_pre.mapv(|v| v.max(0.0));
    let out_pre = head[1].apply(&hidden);
    let omega = out_pre.column(0).mapv(|v| v.max(0.0));
    (
        omega,
        HeadCache {
            input: f.clone(),
            hidden_pre,
            hidden,
            out_pre,
        },
    )
}

fn relu_mask(grad: &mut Array2<f64>, pre: &Array2<f64>) {
    Zip::from(grad).and(pre).for_each(|g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
}

fn dense_backward(layer: &Dense, grad: &mut Dense, x: &Array2<f64>, dz: &Array2<f64>, need_input: bool) -> Option<Array2<f64>> {
    grad.weight += &x.t().dot(dz);
    grad.bias += &dz.sum_axis(Axis(0));
    need_input.then(|| dz.dot(&layer.weight.t()))
}

fn extractor_backward(stages: &[Stage], grads: &mut [Stage], caches: &[StageCache], mut d_out: Array2<f64>) {
    for i in (0..stages.len()).rev() {
        let c = &caches[i];
        let s = &stages[i];
        relu_mask(&mut d_out, &c.pre);
        let g = &mut grads[i];
        g.norm.gamma += &(&d_out * &c.xhat).sum_axis(Axis(0));
        g.norm.beta += &d_out.sum_axis(Axis(0));
        let dxhat = d_out * &s.norm.gamma;
        let n = dxhat.nrows() as f64;
        let sum_d = dxhat.sum_axis(Axis(0));
        let sum_dx = (&dxhat * &c.xhat).sum_axis(Axis(0));
        let dz = ((dxhat * n - &sum_d) - &(&c.xhat * &sum_dx)) * &(&c.inv_std / n);
        match dense_backward(&s.dense, &mut g.dense, &c.input, &dz, i > 0) {
            Some(dx) => d_out = dx,
            None => break,
        }
    }
}

fn head_backward(head: &[Dense; 2], grad: &mut [Dense; 2], c: &HeadCache, d_omega: &Array1<f64>) -> Array2<f64> {
    let mut d_out = d_omega.clone().insert_axis(Axis(1));
    relu_mask(&mut d_out, &c.out_pre);
    let mut d_hidden = dense_backward(&head[1], &mut grad[1], &c.hidden, &d_out, true).expect("requested");
    relu_mask(&mut d_hidden, &c.hidden_pre);
    dense_backward(&head[0], &mut grad[0], &c.input, &d_hidden, true).expect("requested")
}

/// Broadcast of a per-row gate over the feature columns.
fn gate_rows(f: &Array2<f64>, omega: &Array1<f64>) -> Array2<f64> {
    f * &omega.view().insert_axis(Axis(1))
}

impl LmNet {
    pub fn new(params: ModelParams, variant: Variant) -> Self {
        Self {
            params,
            variant,
            gates: GateOverride::default(),
        }
    }

    pub fn forward(&self, batch: &Batch, mode: Mode) -> Result<ForwardCache, LmError> {
        let p = &self.params;
        if batch.iota != p.iota || batch.rss.ncols() != p.kappa * crate::features::ZONE_BINS {
            return Err(LmError::ShapeMismatch(format!(
                "batch ι={} with {} RSS columns, model ι={} κ={}",
                batch.iota,
                batch.rss.ncols(),
                p.iota,
                p.kappa
            )));
        }
        let rows = batch.location.nrows();
        let (f_r, rss_caches) = extractor_forward(&p.rss, &batch.rss, mode);
        let (f_a, loc_caches) = match self.variant {
            Variant::RssOnly => (None, Vec::new()),
            _ => {
                let (f, c) = extractor_forward(&p.location, &batch.location, mode);
                (Some(f), c)
            }
        };
        let ones = || Array1::ones(rows);
        let (omega_a, head_a) = match (self.variant, self.gates.omega_a, &f_a) {
            (Variant::RssOnly, _, _) => (Array1::zeros(rows), None),
            (_, Some(w), _) => (Array1::from_elem(rows, w), None),
            (Variant::RssPlusAng, None, _) => (ones(), None),
            (Variant::Full, None, Some(f)) => {
                let (w, c) = head_forward(&p.fusion_a, f);
                (w, Some(c))
            }
            (Variant::Full, None, None) => unreachable!("location features exist for the full variant"),
        };
        let (omega_r, head_r) = match (self.variant, self.gates.omega_r) {
            (_, Some(w)) => (Array1::from_elem(rows, w), None),
            (Variant::Full, None) => {
                let (w, c) = head_forward(&p.fusion_r, &f_r);
                (w, Some(c))
            }
            _ => (ones(), None),
        };
        let mut fused = gate_rows(&f_r, &omega_r);
        if let Some(f) = &f_a {
            fused += &gate_rows(f, &omega_a);
        }
        let fused = fused
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((batch.len(), p.iota * FEATURE_WIDTH))
            .expect("rows are sample-major");
        let predictions = p.regression.apply(&fused).column(0).to_owned();
        Ok(ForwardCache {
            location: loc_caches,
            rss: rss_caches,
            f_a,
            f_r,
            head_a,
            head_r,
            omega_a,
            omega_r,
            fused,
            predictions,
        })
    }

    pub fn predict(&self, batch: &Batch) -> Result<Array1<f64>, LmError> {
        Ok(self.forward(batch, Mode::Eval)?.predictions)
    }

    /// Gradient of the batch MSE with respect to every trainable tensor,
    /// from a training-mode forward pass.
    pub fn backward(&self, batch: &Batch, cache: &ForwardCache) -> ModelParams {
        let p = &self.params;
        let mut g = p.zeros_like();
        let n = batch.len() as f64;
        let d_pred = (&cache.predictions - &batch.targets) * (2.0 / n);
        let d_pred = d_pred.insert_axis(Axis(1));
        let d_fused = dense_backward(&p.regression, &mut g.regression, &cache.fused, &d_pred, true).expect("requested");
        let rows = cache.f_r.nrows();
        let d_fm = d_fused
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((rows, FEATURE_WIDTH))
            .expect("rows are sample-major");

        let mut d_fr = gate_rows(&d_fm, &cache.omega_r);
        if let Some(hc) = &cache.head_r {
            let d_omega = (&d_fm * &cache.f_r).sum_axis(Axis(1));
            d_fr += &head_backward(&p.fusion_r, &mut g.fusion_r, hc, &d_omega);
        }
        extractor_backward(&p.rss, &mut g.rss, &cache.rss, d_fr);

        if let Some(f_a) = &cache.f_a {
            let mut d_fa = gate_rows(&d_fm, &cache.omega_a);
            if let Some(hc) = &cache.head_a {
                let d_omega = (&d_fm * f_a).sum_axis(Axis(1));
                d_fa += &head_backward(&p.fusion_a, &mut g.fusion_a, hc, &d_omega);
            }
            extractor_backward(&p.location, &mut g.location, &cache.location, d_fa);
        }
        g
    }

    /// Folds the batch statistics of a training pass into the running
    /// statistics (unbiased variance) with momentum [`BN_MOMENTUM`].
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        self.blend_running_stats(cache, BN_MOMENTUM);
    }

    /// Replaces the running statistics with the batch statistics of a
    /// training pass, e.g. one over the whole training set.
    pub fn set_running_stats(&mut self, cache: &ForwardCache) {
        self.blend_running_stats(cache, 1.0);
    }

    fn blend_running_stats(&mut self, cache: &ForwardCache, momentum: f64) {
        let update = |stages: &mut [Stage], caches: &[StageCache]| {
            for (s, c) in stages.iter_mut().zip(caches) {
                let n = c.input.nrows() as f64;
                let unbiased = if n > 1.0 { &c.var * (n / (n - 1.0)) } else { c.var.clone() };
                s.norm.running_mean = &s.norm.running_mean * (1.0 - momentum) + &c.mean * momentum;
                s.norm.running_var = &s.norm.running_var * (1.0 - momentum) + &unbiased * momentum;
            }
        };
        update(&mut self.params.location, &cache.location);
        update(&mut self.params.rss, &cache.rss);
    }
}

/// Mean squared error.
pub fn mse(pred: &Array1<f64>, target: &Array1<f64>) -> f64 {
    (pred - target).mapv(|d| d * d).mean().unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::SampleGroup;
    use crate::rng;
    use approx::assert_relative_eq;

    pub(crate) fn toy_samples(n: usize, iota: usize, kappa: usize, seed: u64) -> Vec<FeatureSample> {
        let mut r = rng::substream(seed, "toy", &[]);
        (0..n)
            .map(|_| FeatureSample {
                iota,
                kappa,
                location: (0..iota * 5).map(|_| r.random_range(-1.0..1.0)).collect(),
                rss: (0..iota * kappa * 3).map(|_| r.random_range(-1.0..1.0)).collect(),
                rwc: r.random_range(50.0..100.0),
                group: SampleGroup {
                    leaf_id: 0,
                    distance: 0.6,
                },
            })
            .collect()
    }

    fn model(iota: usize, kappa: usize, variant: Variant) -> LmNet {
        LmNet::new(ModelParams::init(iota, kappa, &mut rng::substream(1, rng::INIT, &[])), variant)
    }

    fn batch(samples: &[FeatureSample]) -> Batch {
        Batch::from_samples(&samples.iter().collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn table_dimensions() {
        let m = model(11, 4, Variant::Full);
        let p = &m.params;
        let dims: Vec<_> = p.location.iter().map(|s| (s.dense.fan_in(), s.dense.fan_out())).collect();
        assert_eq!(dims, vec![(5, 16), (16, 64), (64, 128), (128, 256), (256, 256)]);
        let dims: Vec<_> = p.rss.iter().map(|s| (s.dense.fan_in(), s.dense.fan_out())).collect();
        assert_eq!(dims, vec![(12, 64), (64, 128), (128, 256), (256, 256)]);
        assert_eq!((p.fusion_a[0].fan_in(), p.fusion_a[0].fan_out()), (256, 32));
        assert_eq!((p.fusion_a[1].fan_in(), p.fusion_a[1].fan_out()), (32, 1));
        assert_eq!((p.regression.fan_in(), p.regression.fan_out()), (11 * 256, 1));
        let out = m.forward(&batch(&toy_samples(3, 11, 4, 0)), Mode::Train).unwrap();
        assert_eq!(out.predictions.len(), 3);
    }

    #[test]
    fn zero_weights_predict_the_bias() {
        let mut m = model(3, 2, Variant::Full);
        for t in m.params.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
        m.params.regression.bias[0] = 71.5;
        let out = m.forward(&batch(&toy_samples(4, 3, 2, 0)), Mode::Train).unwrap();
        assert!(out.predictions.iter().all(|&p| p == 71.5));
    }

    #[test]
    fn single_sample_inference_uses_running_stats() {
        let m = model(1, 4, Variant::Full);
        let b = batch(&toy_samples(1, 1, 4, 3));
        let p = m.predict(&b).unwrap();
        assert!(p[0].is_finite());
    }

    #[test]
    fn shape_mismatch() {
        let m = model(3, 4, Variant::Full);
        let b = batch(&toy_samples(2, 2, 4, 0));
        assert!(matches!(m.forward(&b, Mode::Eval), Err(LmError::ShapeMismatch(_))));
    }

    #[test]
    fn mse_examples() {
        let t = Array1::from(vec![1.0, 2.0, 3.0]);
        assert_eq!(mse(&t, &t), 0.0);
        assert_eq!(mse(&(&t + 2.0), &t), 4.0);
        assert_eq!(mse(&Array1::from(vec![4.0]), &Array1::from(vec![1.0])), 9.0);
    }

    #[test]
    fn regression_bias_gradient_is_twice_mean_residual() {
        let m = model(3, 2, Variant::Full);
        let b = batch(&toy_samples(5, 3, 2, 4));
        let c = m.forward(&b, Mode::Train).unwrap();
        let g = m.backward(&b, &c);
        let expected = 2.0 * (&c.predictions - &b.targets).mean().unwrap();
        assert_relative_eq!(g.regression.bias[0], expected, max_relative = 1e-12);
    }

    #[test]
    fn batch_norm_output_is_standardized() {
        let m = model(4, 2, Variant::Full);
        let b = batch(&toy_samples(16, 4, 2, 5));
        let (_, caches) = extractor_forward(&m.params.rss, &b.rss, Mode::Train);
        for c in &caches {
            for j in 0..c.xhat.ncols() {
                let col = c.xhat.column(j);
                let mean = col.mean().unwrap();
                let var = col.var(0.0);
                assert!(mean.abs() < 1e-6);
                if c.var[j] > 1e-6 {
                    assert!((var - c.var[j] / (c.var[j] + BN_EPS)).abs() < 1e-6);
                    assert!((var - 1.0).abs() < 1e-3);
                }
            }
        }
    }

    #[test]
    fn dead_unit_passes_no_gradient() {
        let mut m = model(3, 2, Variant::Full);
        // Unit 0 of the first RSS stage never fires.
        m.params.rss[0].norm.gamma[0] = 0.0;
        m.params.rss[0].norm.beta[0] = -1.0;
        let b = batch(&toy_samples(6, 3, 2, 6));
        let c = m.forward(&b, Mode::Train).unwrap();
        let g = m.backward(&b, &c);
        assert!(g.rss[0].dense.weight.column(0).iter().all(|&v| v == 0.0));
        assert_eq!(g.rss[0].norm.beta[0], 0.0);
        assert!(g.rss[1].dense.weight.row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forcing_omega_a_to_zero_leaves_the_rss_branch() {
        let mut full = model(3, 2, Variant::Full);
        full.gates = GateOverride {
            omega_a: Some(0.0),
            omega_r: Some(1.0),
        };
        let mut only = full.clone();
        only.variant = Variant::RssOnly;
        only.gates = GateOverride::default();
        let samples = toy_samples(5, 3, 2, 7);
        let b = batch(&samples);
        let a = full.forward(&b, Mode::Train).unwrap().predictions;
        let r = only.forward(&b, Mode::Train).unwrap().predictions;
        assert_eq!(a, r);
    }

    #[test]
    fn rss_plus_ang_is_full_with_unit_gates() {
        let mut full = model(3, 2, Variant::Full);
        full.gates = GateOverride {
            omega_a: Some(1.0),
            omega_r: Some(1.0),
        };
        let mut plus = full.clone();
        plus.variant = Variant::RssPlusAng;
        plus.gates = GateOverride::default();
        let b = batch(&toy_samples(5, 3, 2, 8));
        assert_eq!(
            full.forward(&b, Mode::Train).unwrap().predictions,
            plus.forward(&b, Mode::Train).unwrap().predictions
        );
    }

    #[test]
    fn fusion_is_bilinear_in_the_location_features() {
        let m = model(2, 2, Variant::Full);
        let b = batch(&toy_samples(4, 2, 2, 9));
        let c = m.forward(&b, Mode::Train).unwrap();
        let f_a = c.f_a.as_ref().unwrap();
        let contribution = gate_rows(f_a, &c.omega_a);
        let scaled = gate_rows(&(f_a * 3.0), &c.omega_a);
        for (x, y) in contribution.iter().zip(&scaled) {
            assert_relative_eq!(x * 3.0, *y, max_relative = 1e-15);
        }
    }

    #[test]
    fn running_stats_move_toward_batch_stats() {
        let mut m = model(3, 2, Variant::Full);
        let b = batch(&toy_samples(8, 3, 2, 10));
        let c = m.forward(&b, Mode::Train).unwrap();
        m.update_running_stats(&c);
        let rm = &m.params.rss[0].norm.running_mean;
        assert_relative_eq!(rm[0], 0.1 * c.rss[0].mean[0], max_relative = 1e-12);
        assert!(m.params.is_finite());
    }
}
