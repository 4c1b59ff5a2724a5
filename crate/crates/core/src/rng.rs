//! Seed derivation.
//!
//! Every random draw in a run descends from one master seed. Child seeds are
//! derived by hashing `(parent, label, index)` with SplitMix64 finalizers, so
//! a work item's stream never depends on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Default seed for the reference network allocation.
pub const CANONICAL_SEED: u64 = 42;

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn label_hash(label: &str) -> u64 {
    // FNV-1a
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Derive a child seed from a parent seed, a purpose label and a counter.
pub fn derive_seed(parent: u64, label: &str, index: u64) -> u64 {
    mix(mix(parent ^ label_hash(label)).wrapping_add(index))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
