//! Seeded random streams.
//!
//! All randomness flows from 64-bit seeds through ChaCha8, a counter-based
//! generator. Independent sub-streams are derived as `seed ⊕ splitmix64(i)`,
//! so replicate `i` sees the same numbers regardless of scheduling.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `index`-th sub-stream of `seed`.
pub fn substream(seed: u64, index: u64) -> u64 {
    seed ^ splitmix64(index)
}

/// Two-level derivation, e.g. (replicate, member).
pub fn substream2(seed: u64, a: u64, b: u64) -> u64 {
    substream(substream(seed, a), b.wrapping_add(0x5851_F42D_4C95_7F2D))
}

pub fn gaussian_matrix(rng: &mut StreamRng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    // Filled column-major, so the leading columns of a wider draw coincide
    // with a narrower draw from the same stream.
    DMatrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

pub fn gaussian_vector(rng: &mut StreamRng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| StandardNormal.sample(rng))
}
