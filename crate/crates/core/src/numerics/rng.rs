use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Seed for every stochastic operation in the crate.
///
/// Identical seeds and identical call sequences give bit-identical streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Independent child seed for stream `index` (replications, components).
    pub fn derive(self, index: u64) -> RngSeed {
        let mixed = splitmix64(self.0 ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019)));
        RngSeed(mixed)
    }
}

impl From<u64> for RngSeed {
    fn from(seed: u64) -> Self {
        RngSeed(seed)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
