//! Seeded, portable random numbers.
//!
//! The generator is PCG64 (XSL-RR 128/64) with state `seed` and the PCG
//! default stream `0xa02bdbf7bb3c0a7ac28fa16a64abf96` (increment
//! `stream << 1 | 1`); before the first output the state is advanced by one
//! increment and one LCG step. Uniform
//! doubles take the top 53 bits of each output; normals use the Box-Muller
//! transform, emitting the cosine sample then the sine sample of each pair.
//! That is enough to reproduce every noise field in another language.

use rand_core::Rng;
use rand_pcg::Pcg64;

const DEFAULT_STREAM: u128 = 0x0a02_bdbf_7bb3_c0a7_ac28_fa16_a64a_bf96;

#[derive(Debug, Clone)]
pub struct PortableRng {
    inner: Pcg64,
    spare: Option<f64>,
}

impl PortableRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Pcg64::new(seed as u128, DEFAULT_STREAM),
            spare: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)` by 128-bit multiply-shift.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - u keeps the log argument in (0, 1]
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}
