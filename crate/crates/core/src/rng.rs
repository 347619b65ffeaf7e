//! Counter-based substream derivation.
//!
//! Every random quantity is drawn from a ChaCha stream whose seed is a pure
//! function of the master seed and a path of indices (for example
//! `[rep, draw]`). Results therefore do not depend on how work is split
//! across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

/// Path components that separate independent uses of one master seed.
pub mod tag {
    pub const DATA: u64 = 0x01;
    pub const BOOTSTRAP: u64 = 0x02;
    pub const LIMIT: u64 = 0x03;
    pub const ORACLE: u64 = 0x04;
    pub const PROBE: u64 = 0x05;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the substream at `path` below `master`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn substream(master: u64, path: &[u64]) -> StreamRng {
    let s = derive_seed(master, path);
    let mut seed = [0u8; 32];
    for (k, chunk) in seed.chunks_mut(8).enumerate() {
        chunk.copy_from_slice(&splitmix64(s.wrapping_add(k as u64)).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Reproducibility record attached to every report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedManifest {
    pub master_seed: u64,
    /// Substream path prefix; draw `b` uses `path ++ [b]`.
    pub path: Vec<u64>,
    pub generator: String,
    pub derivation: String,
}

impl SeedManifest {
    pub fn new(master_seed: u64, path: Vec<u64>) -> Self {
        Self {
            master_seed,
            path,
            generator: "chacha8".to_string(),
            derivation: "splitmix64-chain".to_string(),
        }
    }

    pub fn stream(&self, index: u64) -> StreamRng {
        let mut p = self.path.clone();
        p.push(index);
        substream(self.master_seed, &p)
    }
}
