//! Named random sub-streams derived from one experiment seed.
//!
//! Every stage draws from its own ChaCha stream keyed by
//! `(seed, name, indices)`, so any stage can be replayed in isolation and the
//! order in which parallel workers run does not matter.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub const SCENE: &str = "scene";
pub const NOISE: &str = "noise";
pub const DIFFUSE: &str = "diffuse";
pub const INIT: &str = "init";
pub const SHUFFLE: &str = "shuffle";
pub const SPLIT: &str = "split";

pub fn substream(seed: u64, name: &str, indices: &[u64]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((name.len() as u64).to_le_bytes());
    hasher.update(name.as_bytes());
    for i in indices {
        hasher.update(i.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Derives a child seed, for handing a whole sub-experiment its own seed.
pub fn child_seed(seed: u64, name: &str, indices: &[u64]) -> u64 {
    use rand::RngCore;
    substream(seed, name, indices).next_u64()
}
