//! Scalar abstraction shared by the numerical modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the estimators are generic over: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into `Self`, rounding when narrowing.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in every Real")
    }

    /// Converts a count into `Self`.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in every Real")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real always converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub(crate) fn all_finite<T: Real>(xs: &[T]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literals_round_trip_through_f64() {
        assert_eq!(<f64 as Real>::lit(0.1), 0.1);
        assert_eq!(<f32 as Real>::lit(0.1), 0.1f32);
        assert_eq!(<f64 as Real>::from_count(7).as_f64(), 7.0);
    }

    #[test]
    fn finiteness_check() {
        assert!(all_finite(&[1.0f64, -2.0]));
        assert!(!all_finite(&[1.0f64, f64::NAN]));
        assert!(!all_finite(&[f32::INFINITY]));
    }
}
