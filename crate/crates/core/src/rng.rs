//! Seed derivation. One root seed is split into named, independent sub-seeds
//! so that adding a consumer never perturbs the stream of another.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

pub const INIT: &str = "init";
pub const SHUFFLE: &str = "shuffle";
pub const NOISE: &str = "noise";
pub const CLASSIFIER: &str = "classifier";
pub const SYNTHESIS: &str = "synthesis";

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Deterministically derive a named sub-seed from `root`.
pub fn derive_seed(root: u64, name: &str) -> u64 {
    name.bytes()
        .fold(splitmix64(root), |acc, b| splitmix64(acc ^ u64::from(b)))
}

/// Sub-seed for the `index`-th repetition of a stream (e.g. an epoch).
pub fn derive_indexed(root: u64, index: u64) -> u64 {
    splitmix64(root ^ splitmix64(index.wrapping_add(0xD1B5_4A32_D192_ED03)))
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn standard_normal(rng: &mut Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}
