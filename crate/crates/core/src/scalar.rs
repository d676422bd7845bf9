//! Scalar abstraction the engine is generic over.
//!
//! All tensor math works for `f32` and `f64`. Storage precision is the
//! caller's choice (the on-disk container is single precision; tests that pin
//! tight numeric tolerances run in double precision), while reductions always
//! accumulate in `f64` regardless of the storage type.

use std::fmt;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type of tensors: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    /// Widen to `f64` for accumulation.
    #[inline]
    fn wide(self) -> f64 {
        self.to_f64().expect("float widens to f64")
    }

    /// Round a 64-bit accumulator back into storage precision.
    #[inline]
    fn narrow(value: f64) -> Self {
        Self::from_f64(value).expect("f64 narrows to float")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
