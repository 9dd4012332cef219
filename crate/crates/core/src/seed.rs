//! Stable seed derivation.
//!
//! Every RNG stream in the crate is keyed by a base seed plus a textual tag
//! (modality name, subject id, ...). The mixing here is fixed so derived seeds
//! do not change between toolchains, unlike `std::hash::DefaultHasher`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and `tag`.
pub fn derive(base: u64, tag: &str) -> u64 {
    // FNV-1a over the tag, then one splitmix round with the base.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(base ^ splitmix64(h))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rng_for(base: u64, tag: &str) -> ChaCha8Rng {
    rng(derive(base, tag))
}
