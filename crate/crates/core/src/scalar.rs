//! Scalar abstraction shared by every kernel.
//!
//! All contraction and quadrature kernels are generic over the arithmetic
//! type so the same code path runs with plain `f64` in timing mode and with
//! the flop-counting type in counting mode. The counting type lives in the
//! bench module; this trait is the only contract between them.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

pub trait Scalar:
    Copy
    + Clone
    + Debug
    + Default
    + PartialEq
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
{
    fn zero() -> Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;

    /// Multiply-accumulate `self * b + acc`.
    ///
    /// Contractions route every inner step through this so one call is one
    /// multiply and one add. Whether the two are fused is a build property;
    /// comparisons between code paths built the same way stay bitwise stable.
    fn mul_add_acc(self, b: Self, acc: Self) -> Self;
}

impl Scalar for f64 {
    #[inline(always)]
    fn zero() -> Self {
        0.0
    }

    #[inline(always)]
    fn from_f64(x: f64) -> Self {
        x
    }

    #[inline(always)]
    fn to_f64(self) -> f64 {
        self
    }

    #[inline(always)]
    fn mul_add_acc(self, b: Self, acc: Self) -> Self {
        #[cfg(target_feature = "fma")]
        {
            self.mul_add(b, acc)
        }
        #[cfg(not(target_feature = "fma"))]
        {
            self * b + acc
        }
    }
}
