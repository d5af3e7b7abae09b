//! Scalar abstraction for the numeric kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};

/// Floating-point scalar the math kernels are generic over.
///
/// `f32` and `f64` both qualify. The pipeline and all file formats use `f64`;
/// `f32` exists for callers that want the same kernels at lower precision.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum<Self>
    + Debug
    + Display
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Convert an `f64` constant into this scalar type.
    ///
    /// Conversion from finite `f64` cannot fail for the provided impls.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 constant must convert")
    }

    /// Lossy view as `f64`, used for reporting and percentages.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar must convert to f64")
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Sum<Self>
        + Debug
        + Display
        + Default
        + Serialize
        + DeserializeOwned
        + Send
        + Sync
        + 'static
{
}

/// Total order on scalars that are known to be finite.
///
/// Construction-time validation guarantees kernels never see NaN, so a
/// partial comparison failure here is a crate bug.
pub fn cmp_finite<S: Scalar>(a: S, b: S) -> std::cmp::Ordering {
    a.partial_cmp(&b).expect("inputs validated finite")
}
