//! Seed derivation. Every random stream in the simulator is a ChaCha8 stream
//! keyed by the run seed and a per-purpose domain tag, so independent uses of
//! one seed never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const DOMAIN_PORTS: u64 = 0x706f_7274;
pub(crate) const DOMAIN_SCHEDULE: u64 = 0x7363_6864;
pub(crate) const DOMAIN_NOISE: u64 = 0x6e6f_6973;
pub(crate) const DOMAIN_INPUTS: u64 = 0x696e_7075;
pub(crate) const DOMAIN_DELIVERY: u64 = 0x6465_6c76;
pub(crate) const DOMAIN_FAULTS: u64 = 0x6661_756c;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn stream(seed: u64, domain: u64, a: u64, b: u64) -> ChaCha8Rng {
    let key = mix(mix(seed ^ mix(domain)) ^ a);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(b);
    rng
}
