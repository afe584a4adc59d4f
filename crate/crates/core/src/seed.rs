//! Seed derivation. An experiment seed is split into labelled substreams so
//! that varying one factor (data, levels, order) leaves the others fixed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named generator used for every random draw in the crate.
pub type LabRng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Deterministic child seed for `label`.
pub fn derive(seed: u64, label: &str) -> u64 {
    let mut h = splitmix64(seed);
    for b in label.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    h
}

pub fn rng(seed: u64) -> LabRng {
    LabRng::seed_from_u64(seed)
}

/// Generator for one indexed substream, e.g. one dataset row. The result
/// depends only on `(seed, index)`, never on how work is scheduled.
pub fn substream(seed: u64, index: u64) -> LabRng {
    let mut r = LabRng::seed_from_u64(seed);
    r.set_stream(index);
    r
}
