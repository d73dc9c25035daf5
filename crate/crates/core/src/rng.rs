//! Keyed, splittable random streams.
//!
//! Every stochastic unit of work (one simulated trajectory, one bootstrap
//! replicate, one sweep cell) draws from its own ChaCha8 stream derived from
//! the master seed and a path of integers. Results therefore do not depend
//! on evaluation order.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream type used throughout the crate.
pub type Stream = ChaCha8Rng;

/// Domain tags that separate the stream families of different commands.
pub mod domain {
    /// Trajectory simulation.
    pub const SIMULATE: u64 = 1;
    /// Faculty-level bootstrap of the full model fit.
    pub const BOOTSTRAP: u64 = 2;
    /// Variance sweep cells.
    pub const SWEEP: u64 = 3;
    /// Bootstrap confidence intervals of ensemble summaries.
    pub const SUMMARY: u64 = 4;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the stream for `path` under `seed`.
pub fn stream(seed: u64, path: &[u64]) -> Stream {
    let mut state = seed;
    let mut acc = splitmix64(&mut state);
    for &p in path {
        state ^= p.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        acc ^= splitmix64(&mut state);
        state = state.rotate_left(17) ^ acc;
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Uniform draw on the open interval (0, 1) with 53 bits of resolution.
pub fn uniform_open<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Uniform index in `0..n`. `n` must be positive.
pub fn index<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> usize {
    // Lemire's multiply-shift with rejection.
    let n64 = n as u64;
    let zone = u64::MAX - (u64::MAX - n64 + 1) % n64;
    loop {
        let v = rng.next_u64();
        let m = (v as u128) * (n64 as u128);
        if (m as u64) <= zone {
            return (m >> 64) as usize;
        }
    }
}
