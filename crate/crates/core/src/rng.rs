//! Named, independently derived random streams.
//!
//! Every consumer of randomness (weight init, latent draws for each training
//! path, subset sampling, augmentation, t-SNE init) gets its own stream derived
//! from a root seed and a label, so enabling one feature never shifts the draws
//! seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// A root seed that can be split into labelled child streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedStream(pub u64);

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream(seed)
    }

    /// Child stream for `label`. Deterministic; distinct labels give unrelated seeds.
    pub fn derive(self, label: &str) -> SeedStream {
        SeedStream(splitmix64(self.0 ^ splitmix64(fnv1a(label))))
    }

    /// Child stream for the `index`-th step of a repeated consumer.
    pub fn derive_index(self, index: u64) -> SeedStream {
        SeedStream(splitmix64(
            self.0
                .wrapping_add(splitmix64(index ^ 0xA5A5_5A5A_DEAD_BEEF)),
        ))
    }

    pub fn rng(self) -> StreamRng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl From<u64> for SeedStream {
    fn from(v: u64) -> Self {
        SeedStream(v)
    }
}
