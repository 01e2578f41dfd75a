//! Scalar abstraction for the numeric kernels.
//!
//! Everything downstream is generic over [`Real`], which is `num_traits::Float`
//! plus the few extras the pricers need (`erf`, conversions, `Display` for
//! serialization). Implemented for `f32` and `f64`; the CLI and the type
//! aliases at the crate root use `f64`.

use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the pricing and solver routines.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Error function, needed by the closed-form normal CDF.
    fn erf(self) -> Self;

    /// Shorthand for lossless construction from a small integer literal.
    fn of(n: i32) -> Self {
        Self::from_i32(n).expect("i32 fits every Real")
    }

    /// Construction from f64 constants (rounds once for f32).
    fn of_f64(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant fits every Real")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl Real for f64 {
    fn erf(self) -> Self {
        libm::erf(self)
    }
}

impl Real for f32 {
    fn erf(self) -> Self {
        libm::erff(self)
    }
}

/// Standard normal CDF via the error function.
pub fn normal_cdf<R: Real>(x: R) -> R {
    let half = R::of_f64(0.5);
    half * (R::one() + (x / R::SQRT_2()).erf())
}
