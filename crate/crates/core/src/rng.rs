//! Reproducible random streams.
//!
//! `xorshift64*`: with 64-bit state `x`,
//!
//! ```text
//! x ^= x >> 12;  x ^= x << 25;  x ^= x >> 27;
//! out = x * 0x2545F4914F6CDD1D   (wrapping)
//! ```
//!
//! A zero seed is replaced by `0x9E3779B97F4A7C15`. Uniform reals in `[0, 1)`
//! take the top 53 bits: `(out >> 11) * 2^-53`. Any implementation of these
//! few lines reproduces the same streams.

use crate::grid_core::{Grid, ScalarField, VectorField};
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        let state = if seed == 0 { 0x9E37_79B9_7F4A_7C15 } else { seed };
        XorShift64Star { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn scalar_field<T: Real>(&mut self, grid: &Grid, lo: f64, hi: f64) -> ScalarField<T> {
        let values = (0..grid.node_count()).map(|_| T::lit(self.uniform(lo, hi))).collect();
        ScalarField::from_values(grid.clone(), values).expect("length matches grid")
    }

    pub fn vector_field<T: Real>(&mut self, grid: &Grid, lo: f64, hi: f64) -> VectorField<T> {
        let values = (0..grid.dim() * grid.node_count()).map(|_| T::lit(self.uniform(lo, hi))).collect();
        VectorField::from_values(grid.clone(), values).expect("length matches grid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_stream() {
        // first outputs for seed 1, computed by hand from the update formula
        let mut r = XorShift64Star::new(1);
        let x1: u64 = {
            let mut x: u64 = 1;
            x ^= x >> 12;
            x ^= x << 25;
            x ^= x >> 27;
            x
        };
        assert_eq!(x1, 33_554_433);
        assert_eq!(r.next_u64(), 33_554_433u64.wrapping_mul(0x2545_F491_4F6C_DD1D));
    }

    #[test]
    fn uniform_range_and_determinism() {
        let mut a = XorShift64Star::new(42);
        let mut b = XorShift64Star::new(42);
        for _ in 0..1000 {
            let x = a.next_f64();
            assert!((0.0..1.0).contains(&x));
            assert_eq!(x.to_bits(), b.next_f64().to_bits());
        }
        assert_ne!(XorShift64Star::new(0).next_u64(), 0);
    }
}
