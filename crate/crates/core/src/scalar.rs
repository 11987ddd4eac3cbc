//! Scalar abstractions.
//!
//! The probability and bound arithmetic is written against [`Real`], which
//! both `f32` and `f64` satisfy. Exact bookkeeping (variance identities,
//! error-budget sums) is written against [`Field`], which additionally admits
//! arbitrary-precision rationals.

use core::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, Num, Signed, ToPrimitive};

/// Floating point: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + core::ops::AddAssign
    + core::ops::SubAssign
    + core::ops::MulAssign
    + core::ops::DivAssign
    + Debug
    + Display
    + core::fmt::LowerExp
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion of an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable in scalar type")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Ordered field with exact or floating arithmetic.
pub trait Field: Num + Signed + Clone + PartialOrd + FromPrimitive + Debug {}

impl<T> Field for T where T: Num + Signed + Clone + PartialOrd + FromPrimitive + Debug {}
