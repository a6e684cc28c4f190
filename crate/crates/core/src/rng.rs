//! Seeded randomness.
//!
//! Every random draw in the crate comes from [`HashRng`], a ChaCha8 stream
//! seeded with a 64-bit integer. Independent streams for different purposes
//! (projection entries, codeword selection, per-epoch shuffles, ...) are
//! obtained with [`derive_seed`], a SplitMix64 mix of the parent seed and a
//! stream identifier. Standard normal variates use the Box–Muller transform
//! over the same generator (see [`Gaussian`]).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type HashRng = ChaCha8Rng;

/// Stream identifiers for [`derive_seed`].
pub mod stream {
    pub const PROJECTION: u64 = 1;
    pub const CODEWORD_SELECTION: u64 = 2;
    pub const INIT: u64 = 3;
    pub const SHUFFLE: u64 = 4;
    pub const BLOB_CENTERS: u64 = 5;
    pub const BLOB_NOISE: u64 = 6;
    pub const SPLIT: u64 = 7;
    pub const LSH: u64 = 8;
}

pub fn rng_from_seed(seed: u64) -> HashRng {
    HashRng::seed_from_u64(seed)
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for an independent sub-stream of `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Rng for sub-stream `stream` of `seed`.
pub fn sub_rng(seed: u64, stream: u64) -> HashRng {
    rng_from_seed(derive_seed(seed, stream))
}

/// Box–Muller standard normal sampler.
///
/// Each transform consumes two uniforms `u1 ∈ (0, 1]`, `u2 ∈ [0, 1)` and
/// yields `r·cos θ` followed by `r·sin θ` on the next call, where
/// `r = sqrt(-2 ln u1)` and `θ = 2π u2`.
#[derive(Debug, Clone)]
pub struct Gaussian<R> {
    rng: R,
    spare: Option<f64>,
}

impl<R: Rng> Gaussian<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, spare: None }
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        // gen::<f64>() is in [0, 1); flip it so the log argument is never 0.
        let u1 = 1.0 - self.rng.gen::<f64>();
        let u2 = self.rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn into_inner(self) -> R {
        self.rng
    }
}
