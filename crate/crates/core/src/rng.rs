//! Deterministic RNG streams derived from a single master seed.
//!
//! Every source of randomness in a run (weight init, per-stage shuffles)
//! draws from its own ChaCha stream derived from `(master_seed, label,
//! index)`, so runs are reproducible and stages are insensitive to each
//! other's draw counts.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seed expander rooted at one master seed.
#[derive(Clone, Copy, Debug)]
pub struct SeedTree {
    master: u64,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Derive the sub-seed for `(label, index)`.
    pub fn derive(&self, label: &str, index: u64) -> u64 {
        let mut h = self.master ^ 0x9e37_79b9_7f4a_7c15;
        for &b in label.as_bytes() {
            h = splitmix64(h ^ u64::from(b));
        }
        splitmix64(h ^ index)
    }

    /// RNG stream for `(label, index)`.
    pub fn rng(&self, label: &str, index: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.derive(label, index))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
