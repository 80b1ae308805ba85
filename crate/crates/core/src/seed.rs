//! Seed derivation.
//!
//! Every random stream is a ChaCha8 generator keyed by a 64-bit seed derived
//! from a root seed and a path of labels, so streams never depend on the
//! order in which other streams were consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Derives a child seed from `parent`, a label and an index.
pub fn derive(parent: u64, label: &str, index: u64) -> u64 {
    splitmix(splitmix(parent ^ fnv(label)).wrapping_add(splitmix(index)))
}

/// Generator for the stream `(parent, label, index)`.
pub fn stream(parent: u64, label: &str, index: u64) -> Rng {
    Rng::seed_from_u64(derive(parent, label, index))
}
