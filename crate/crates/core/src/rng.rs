//! Seeded random streams.
//!
//! Every stochastic operation takes an explicit `u64` seed. Independent
//! sub-streams (per image, per weight, per iteration) are derived with
//! [`derive_seed`] so results never depend on evaluation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::Vector;

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes a base seed with a stream tag and an index into a new seed.
pub fn derive_seed(base: u64, stream_tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ splitmix64(stream_tag)) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn standard_normal(rng: &mut StreamRng, len: usize) -> Vector {
    Vector::from_iterator(len, (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

pub fn uniform_index(rng: &mut StreamRng, n: usize) -> usize {
    rng.random_range(0..n)
}

pub fn uniform_unit(rng: &mut StreamRng) -> f64 {
    rng.random::<f64>()
}
