//! Scalar abstraction: all statistics are generic over the floating-point
//! type through [`Scalar`], with `f64` as the default used by the harness
//! and the CLI.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by every statistic in the crate.
///
/// `ln_gamma` routes through `f64`; the special-function precision of `f64`
/// dominates `f32` rounding anyway.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; panics only on values not representable
    /// at all (never for finite inputs).
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 not representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }

    fn ln_gamma(self) -> Self {
        Self::of(statrs::function::gamma::ln_gamma(self.as_f64()))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
