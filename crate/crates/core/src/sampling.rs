//! Seeded random sampling shared by the axiom checker and the
//! initial-condition generators.
//!
//! The stream is xoshiro256++ seeded through SplitMix64 (the
//! `seed_from_u64` convention of `rand_xoshiro`). Uniform doubles take the
//! top 53 bits of each output, normals use Box–Muller with the cosine
//! branch only, so the sequence can be reproduced outside Rust.

use crate::math;
use rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Identifier recorded next to generated data.
pub const PRNG_ALGORITHM: &str = "xoshiro256++/splitmix64-seed/u53-uniform/box-muller-cos";

/// Deterministic sampler over a fixed seed.
#[derive(Debug, Clone)]
pub struct Sampler {
    rng: Xoshiro256PlusPlus,
}

impl Sampler {
    /// Sampler for a 64-bit seed.
    pub fn new(seed: u64) -> Self {
        Self { rng: Xoshiro256PlusPlus::seed_from_u64(seed) }
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal.
    pub fn normal(&mut self) -> f64 {
        // 1 − u keeps the log argument in (0, 1].
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        math::sqrt(-2.0 * math::ln(u1)) * math::cos(core::f64::consts::TAU * u2)
    }

    /// Fills `out` with a uniformly distributed unit vector.
    pub fn unit_vector(&mut self, out: &mut [f64]) {
        loop {
            for x in out.iter_mut() {
                *x = self.normal();
            }
            let n = math::norm(out);
            if n > 1e-300 {
                out.iter_mut().for_each(|x| *x /= n);
                return;
            }
        }
    }
}
