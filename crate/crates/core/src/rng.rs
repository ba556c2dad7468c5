//! Seed derivation and quasi-random streams.
//!
//! Every random quantity in an experiment is drawn from a stream keyed by a
//! tuple of integers, so that adding a stream never shifts another one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

/// Sobol dimensions available per scrambling seed.
const SOBOL_BLOCK: usize = 256;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a sequence of stream labels into a new seed.
pub fn derive_seed(base: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(splitmix64(base), |acc, &label| {
        splitmix64(acc ^ splitmix64(label))
    })
}

pub fn rng_from(base: u64, labels: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, labels))
}

/// Owen-scrambled Sobol point `index` in `dim` dimensions, values in (0, 1).
///
/// Dimensions beyond the per-seed table are served from additional
/// independently scrambled blocks.
pub fn sobol_point(index: u32, dim: usize, seed: u64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), dim);
    for (j, slot) in out.iter_mut().enumerate() {
        let block = (j / SOBOL_BLOCK) as u64;
        let block_seed = derive_seed(seed, &[block]) as u32;
        let u = sobol_burley::sample(index, (j % SOBOL_BLOCK) as u32, block_seed) as f64;
        // f32 resolution; keep strictly inside the unit interval
        *slot = u.clamp(1e-9, 1.0 - 1e-9);
    }
}

/// `count` standard-normal vectors of length `dim` from scrambled Sobol points.
pub fn sobol_normals(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut u = vec![0.0; dim];
    (0..count)
        .map(|i| {
            sobol_point(i as u32, dim, seed, &mut u);
            u.iter().map(|&p| normal.inverse_cdf(p)).collect()
        })
        .collect()
}
