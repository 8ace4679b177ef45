//! Floating-point scalar abstraction.
//!
//! Every numerical routine in this crate is generic over [`Scalar`] so the
//! whole pipeline can run in `f32` or `f64`. The trait bundles the num-traits
//! capabilities the solvers need (float arithmetic, FFT compatibility, serde)
//! with the two conversions that come up constantly at API boundaries
//! (`f64` literals in, `f64` reports out) and seeded random draws.
//!
//! Random draws always consume the generator as `f64` and round into `Self`,
//! so an `f32` run visits the same sample points as the `f64` run (rounded)
//! instead of walking a different RNG stream.

use num_traits::{Float, FloatConst, NumAssign};
use rand::Rng;
use rustfft::FftNum;
use serde::{de::DeserializeOwned, Serialize};
use std::fmt::{Display, LowerExp};
use std::iter::Sum;

/// Real scalar type usable throughout the benchmark pipeline.
pub trait Scalar:
    FftNum
    + Float
    + FloatConst
    + NumAssign
    + Sum<Self>
    + Display
    + LowerExp
    + Serialize
    + DeserializeOwned
    + Default
{
    /// Type tag recorded in container headers (`"f32"` / `"f64"`).
    const DTYPE: &'static str;

    /// Lossy conversion from `f64` (rounds to nearest for `f32`).
    fn of_f64(v: f64) -> Self;

    /// Widening conversion to `f64` (exact for both supported types).
    fn as_f64(self) -> f64;

    /// Conversion from a count; exact for the sizes that appear here.
    fn of_usize(n: usize) -> Self {
        Self::of_f64(n as f64)
    }

    /// Uniform draw in `[0, 1)`.
    ///
    /// The 64-bit-to-double mapping is pinned here (top 53 bits) rather
    /// than delegated to `rand`'s distribution machinery, so seeded runs
    /// stay reproducible across `rand` upgrades.
    fn uniform_01<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::of_f64((rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64))
    }

    /// Standard normal draw via Box-Muller.
    ///
    /// Computed in `f64` and rounded, for cross-precision stream parity.
    /// Box-Muller is exact in distribution, needs no rejection loop, and
    /// spares a dependency; the discarded second variate is irrelevant at
    /// the draw counts this crate makes.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let u1 = f64::uniform_01(rng);
        let u2 = f64::uniform_01(rng);
        // 1 - u1 ∈ (0, 1] keeps the log argument away from zero.
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        Self::of_f64(r * (std::f64::consts::TAU * u2).cos())
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";

    #[inline]
    fn of_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";

    #[inline]
    fn of_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
}
