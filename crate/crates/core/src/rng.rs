//! Seeded random streams for simulations.
//!
//! Every replication owns a [`SimRng`] derived from the base seed by
//! [`split`], so runs are reproducible regardless of thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Increment of the splitmix64 sequence.
pub const SPLIT_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
/// First multiplier of the splitmix64 finalizer.
pub const MIX_MUL_1: u64 = 0xbf58_476d_1ce4_e5b9;
/// Second multiplier of the splitmix64 finalizer.
pub const MIX_MUL_2: u64 = 0x94d0_49bb_1331_11eb;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(MIX_MUL_1);
    z = (z ^ (z >> 27)).wrapping_mul(MIX_MUL_2);
    z ^ (z >> 31)
}

/// Child seed number `index` of `seed`.
pub fn split(seed: u64, index: u64) -> u64 {
    mix64(seed.wrapping_add(SPLIT_GAMMA.wrapping_mul(index.wrapping_add(1))))
}

#[derive(Debug, Clone)]
pub struct SimRng {
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl SimRng {
    pub fn seed_from(seed: u64) -> Self {
        SimRng { inner: ChaCha8Rng::seed_from_u64(seed), spare: None }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Standard normal draw by the Box–Muller transform.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 − u lies in (0, 1], keeping the logarithm finite
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}
