//! Counter-based Gaussian draws.
//!
//! Every draw is a pure function of `(seed, stream, path_id, mode, step)`:
//! the ChaCha8 key is derived from `(seed, stream)`, the ChaCha stream id is
//! the path id and the block position encodes `(step, mode)`. Nothing is
//! carried between draws, so results do not depend on thread count or on
//! the order in which draws are requested.

use std::f64::consts::PI;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream for the base-level Wiener increments.
pub const STREAM_INCREMENTS: u32 = 0;
/// Stream holding Brownian-bridge midpoints for refinement level `level >= 1`.
pub fn bridge_stream(level: u32) -> u32 {
    assert!(level >= 1);
    level
}
/// Stream for random initial data.
pub const STREAM_INITIAL: u32 = 0xFFFF_0001;

const MAX_MODE_BITS: u32 = 24;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A keyed generator positioned per `(mode, step)` on demand.
#[derive(Clone)]
pub struct CounterNormal {
    rng: ChaCha8Rng,
}

impl CounterNormal {
    pub fn new(seed: u64, stream: u32, path_id: u64) -> Self {
        let mut state = seed ^ (u64::from(stream)).wrapping_mul(0xD1B5_4A32_D192_ED03);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(path_id);
        Self { rng }
    }

    /// Standard normal draw at counter `(mode, step)`.
    pub fn normal(&mut self, mode: u32, step: u64) -> f64 {
        assert!(mode < (1 << MAX_MODE_BITS), "mode index out of range");
        assert!(
            step < (1u64 << 63) >> MAX_MODE_BITS,
            "step index out of range"
        );
        // One 16-word ChaCha block per counter.
        let block = (u128::from(step) << MAX_MODE_BITS) | u128::from(mode);
        self.rng.set_word_pos(block << 4);
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        // u1 in (0, 1], u2 in [0, 1)
        let u1 = ((a >> 11) + 1) as f64 * (1.0 / 9_007_199_254_740_992.0);
        let u2 = (b >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }
}

/// One-shot standard normal at the full key.
pub fn standard_normal(seed: u64, stream: u32, path_id: u64, mode: u32, step: u64) -> f64 {
    CounterNormal::new(seed, stream, path_id).normal(mode, step)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_function_of_key() {
        let a = standard_normal(7, 0, 3, 2, 100);
        let mut g = CounterNormal::new(7, 0, 3);
        let _ = g.normal(5, 5);
        assert_eq!(g.normal(2, 100), a);
        assert_ne!(standard_normal(7, 0, 4, 2, 100), a);
        assert_ne!(standard_normal(7, 1, 3, 2, 100), a);
        assert_ne!(standard_normal(8, 0, 3, 2, 100), a);
        assert_ne!(standard_normal(7, 0, 3, 3, 100), a);
    }

    #[test]
    fn rough_moments() {
        let mut g = CounterNormal::new(1, 0, 0);
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|i| g.normal(0, i)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt());
    }
}
