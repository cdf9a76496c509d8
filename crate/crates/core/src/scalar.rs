//! Scalar abstraction over the element type of network parameters.
//!
//! Everything numeric in this crate is generic over [`Scalar`], which is
//! implemented for `f32` and `f64`. The artifact formats and the CLI work in
//! `f32` (matching training precision); `f64` instantiations are used where
//! extra headroom matters, e.g. finite-difference gradient oracles in tests.
//!
//! Reductions (dot products, loss means, GEMM inner loops) always accumulate
//! in `f64` regardless of `S`, and elementwise parameter arithmetic runs
//! through an `f64` intermediate with a single rounding back to `S`.

use num_traits::{Float, FromPrimitive};
use std::fmt::{Debug, Display};

/// Element type of parameters, activations and gradients: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Widen to `f64` (lossless for both implementors).
    fn as_f64(self) -> f64;

    /// Round an `f64` back to `S` (nearest-even).
    fn of_f64(x: f64) -> Self;
}

impl Scalar for f32 {
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self as f64
    }

    #[inline(always)]
    fn of_f64(x: f64) -> Self {
        x as f32
    }
}

impl Scalar for f64 {
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }

    #[inline(always)]
    fn of_f64(x: f64) -> Self {
        x
    }
}
