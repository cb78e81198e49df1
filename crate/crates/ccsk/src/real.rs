//! Scalar abstraction for the numeric kernels.
//!
//! Everything downstream of sample generation is written against [`Real`]
//! so the same code runs in `f32` or `f64`. Serialized artifacts (frames,
//! checkpoints) are always 64-bit little-endian regardless of the working
//! precision.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;
use rand::Rng;

/// Floating point scalar usable throughout the simulator.
pub trait Real:
    Float + Sum<Self> + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64` (exact for `f64`, rounded for `f32`).
    fn of(v: f64) -> Self;

    /// Widening conversion to `f64` (exact for both supported types).
    fn to_f64(self) -> f64;

    /// Uniform draw from `[0, 1)`.
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;

    fn of_usize(v: usize) -> Self {
        Self::of(v as f64)
    }
}

impl Real for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self
    }

    #[inline]
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.gen::<f64>()
    }
}

impl Real for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }

    #[inline]
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.gen::<f32>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions_round_trip() {
        assert_eq!(f64::of(1.25).to_f64(), 1.25);
        assert_eq!(f32::of(1.25).to_f64(), 1.25);
        assert_eq!(f64::of_usize(7), 7.0);
    }
}
