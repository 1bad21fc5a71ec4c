//! Rademacher multipliers from a counter-based generator.
//!
//! Realization `b` under `seed` reads ChaCha8 stream `b` of the key derived
//! from `seed`, so any realization can be regenerated on its own, in any
//! order, on any thread.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn stream(seed: u64, realization: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(realization);
    rng
}

/// Fills `out` with ±1 drawn for `(seed, realization)`.
pub fn fill_rademacher(seed: u64, realization: u64, out: &mut [f64]) {
    let mut rng = stream(seed, realization);
    for chunk in out.chunks_mut(64) {
        let bits = rng.next_u64();
        for (k, r) in chunk.iter_mut().enumerate() {
            *r = if bits >> k & 1 == 1 { 1.0 } else { -1.0 };
        }
    }
}

/// `n` Rademacher values for realization `realization` under `seed`.
pub fn rademacher_stream(seed: u64, realization: u64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    fill_rademacher(seed, realization, &mut out);
    out
}

/// SplitMix64 finaliser, used to derive independent child seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
