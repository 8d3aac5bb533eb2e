use super::{FeatureError, FeatureSample};
use crate::rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// RWC level key; levels are whole percents.
fn level(rwc: f64) -> i64 {
    rwc.round() as i64
}

/// Groups `indices` by RWC level, each group shuffled.
fn shuffled_levels(samples: &[FeatureSample], indices: &[usize], seed: u64, stream: &str) -> Vec<Vec<usize>> {
    let mut by_level: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for &i in indices {
        by_level.entry(level(samples[i].rwc)).or_default().push(i);
    }
    by_level
        .into_iter()
        .map(|(lvl, mut idx)| {
            idx.sort_unstable();
            idx.shuffle(&mut rng::substream(seed, stream, &[lvl as u64]));
            idx
        })
        .collect()
}

/// Stratified k-fold. Each RWC level is shuffled and dealt round-robin, the
/// dealing position carrying over from one level to the next, so every fold
/// holds within one sample of its proportional share of each level and fold
/// sizes differ by at most one.
pub fn kfold_split(samples: &[FeatureSample], k: usize, seed: u64) -> Result<Vec<Fold>, FeatureError> {
    if k < 2 || k > samples.len() {
        return Err(FeatureError::TooFewSamples {
            needed: k.max(2),
            got: samples.len(),
        });
    }
    let all: Vec<usize> = (0..samples.len()).collect();
    let mut tests = vec![Vec::new(); k];
    let mut pos = 0;
    for idx in shuffled_levels(samples, &all, seed, rng::SPLIT) {
        for i in idx {
            tests[pos % k].push(i);
            pos += 1;
        }
    }
    Ok(tests
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let train = all.iter().copied().filter(|i| test.binary_search(i).is_err()).collect();
            Fold { train, test }
        })
        .collect())
}

/// Leave-one-distance-out: one fold per distinct distance (to the mm), in
/// ascending order.
pub fn logo_split(samples: &[FeatureSample]) -> Result<Vec<Fold>, FeatureError> {
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        groups.entry((s.group.distance * 1000.0).round() as i64).or_default().push(i);
    }
    if groups.len() < 2 {
        return Err(FeatureError::TooFewSamples {
            needed: 2,
            got: groups.len(),
        });
    }
    Ok(groups
        .values()
        .map(|test| Fold {
            train: (0..samples.len()).filter(|i| test.binary_search(i).is_err()).collect(),
            test: test.clone(),
        })
        .collect())
}

/// Carves a stratified validation set (about `fraction` of every RWC level,
/// at least one sample per level with two or more) out of a training split.
pub fn validation_split(
    samples: &[FeatureSample],
    train: &[usize],
    fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut fit = Vec::new();
    let mut val = Vec::new();
    for idx in shuffled_levels(samples, train, seed, "validation") {
        let n_val = if idx.len() >= 2 {
            ((idx.len() as f64 * fraction).round() as usize).clamp(1, idx.len() - 1)
        } else {
            0
        };
        val.extend_from_slice(&idx[..n_val]);
        fit.extend_from_slice(&idx[n_val..]);
    }
    fit.sort_unstable();
    val.sort_unstable();
    (fit, val)
}
