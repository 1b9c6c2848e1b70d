//! Seed derivation.
//!
//! Every component gets `derive_seed(global, label)`: the FNV-1a 64-bit hash
//! of `label` is XORed into the global seed and the result is passed through
//! one SplitMix64 finalization round. Labels in use are `"charlm"`,
//! `"charlm/svr/<emotion>"`, `"word/<emotion>"` and `"baseline/<emotion>"`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(global: u64, label: &str) -> u64 {
    splitmix64(global ^ fnv1a64(label.as_bytes()))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
