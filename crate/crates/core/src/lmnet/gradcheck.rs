use super::model::{mse, Batch, LmNet, Mode};
use super::LmError;
use crate::rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

/// Worst disagreement between analytic and central-difference gradients
/// within one parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCheck {
    pub name: String,
    pub checked: usize,
    /// Probes discarded because `±h` moved some ReLU input across zero.
    pub kinks_skipped: usize,
    pub max_relative_error: f64,
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the analytic gradient of the batch MSE with central differences
/// of step `h` on `per_tensor` randomly chosen entries of every trainable
/// tensor (all entries when the tensor is smaller).
///
/// A central difference straddling a ReLU kink does not estimate the
/// derivative, so probes whose `±h` passes change any ReLU's active set are
/// discarded and replaced by another entry.
pub fn gradient_check(
    net: &LmNet,
    batch: &Batch,
    h: f64,
    per_tensor: usize,
    floor: f64,
    seed: u64,
) -> Result<Vec<GroupCheck>, LmError> {
    let cache = net.forward(batch, Mode::Train)?;
    let grads = net.backward(batch, &cache);
    let analytic: Vec<(String, Vec<f64>)> = grads.tensors().into_iter().map(|(n, t)| (n, t.to_vec())).collect();
    let base = cache.relu_pattern();
    let loss_at = |probe: &LmNet| -> Result<(f64, bool), LmError> {
        let c = probe.forward(batch, Mode::Train)?;
        Ok((mse(&c.predictions, &batch.targets), c.relu_pattern() == base))
    };
    let mut probe = net.clone();
    let mut out = Vec::with_capacity(analytic.len());
    for (t, (name, g)) in analytic.iter().enumerate() {
        let mut order: Vec<usize> = (0..g.len()).collect();
        order.shuffle(&mut rng::substream(seed, "gradcheck", &[t as u64]));
        let mut worst = 0.0f64;
        let mut checked = 0;
        let mut kinks_skipped = 0;
        for i in order {
            if checked == per_tensor {
                break;
            }
            let original = probe.params.tensors_mut()[t][i];
            probe.params.tensors_mut()[t][i] = original + h;
            let (up, same_up) = loss_at(&probe)?;
            probe.params.tensors_mut()[t][i] = original - h;
            let (down, same_down) = loss_at(&probe)?;
            probe.params.tensors_mut()[t][i] = original;
            if !(same_up && same_down) {
                kinks_skipped += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(g[i], numeric, floor));
            checked += 1;
        }
        out.push(GroupCheck {
            name: name.clone(),
            checked,
            kinks_skipped,
            max_relative_error: worst,
        });
    }
    Ok(out)
}
