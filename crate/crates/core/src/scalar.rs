//! Numeric abstraction shared by every module.
//!
//! Network construction, accounts, disparity, significance values and the
//! exact absorbing-chain solve only need field arithmetic, so they are written
//! against [`Scalar`]. That lets the same code run on `f64`, `f32` or an exact
//! rational type. Sampling, logarithmic fits and square roots go through `f64`.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{FromPrimitive, NumAssign, Signed, ToPrimitive};

/// Exact rational scalar. Suitable for small hand-built fixtures; large
/// networks overflow the 128-bit numerator/denominator.
pub type Rational = Ratio<i128>;

pub trait Scalar:
    NumAssign
    + Signed
    + PartialOrd
    + Copy
    + FromPrimitive
    + ToPrimitive
    + FromStr
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Relative tolerance below which a difference is treated as cancellation
    /// noise. Zero for exact types.
    fn cancellation_tolerance() -> Self;

    /// Residual threshold for iterative solvers.
    fn convergence_tolerance() -> Self;

    fn from_usize_exact(n: usize) -> Self {
        Self::from_usize(n).expect("integer not representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn is_finite_value(self) -> bool;
}

impl Scalar for f64 {
    fn cancellation_tolerance() -> Self {
        1e-12
    }
    fn convergence_tolerance() -> Self {
        1e-12
    }
    fn is_finite_value(self) -> bool {
        self.is_finite()
    }
}

impl Scalar for f32 {
    fn cancellation_tolerance() -> Self {
        1e-6
    }
    fn convergence_tolerance() -> Self {
        1e-6
    }
    fn is_finite_value(self) -> bool {
        self.is_finite()
    }
}

impl Scalar for Rational {
    fn cancellation_tolerance() -> Self {
        Ratio::from_integer(0)
    }
    fn convergence_tolerance() -> Self {
        Ratio::new(1, 1_000_000_000_000)
    }
    fn is_finite_value(self) -> bool {
        true
    }
}

/// `true` when `a` and `b` agree up to the scalar's cancellation tolerance,
/// measured relative to the larger magnitude.
pub fn nearly_equal<S: Scalar>(a: S, b: S) -> bool {
    let scale = if a.abs() > b.abs() { a.abs() } else { b.abs() };
    (a - b).abs() <= S::cancellation_tolerance() * scale
}

pub(crate) fn max_of<S: Scalar>(a: S, b: S) -> S {
    if b > a {
        b
    } else {
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_is_exact() {
        let third = Rational::new(1, 3);
        assert_eq!(third * Rational::from_usize_exact(3), Rational::from_integer(1));
        assert!(!nearly_equal(Rational::new(1, 3), Rational::new(1_000_000, 3_000_001)));
    }

    #[test]
    fn float_cancellation() {
        assert!(nearly_equal(0.1 + 0.2, 0.3));
        assert!(!nearly_equal(1.0, 1.0 + 1e-9));
    }
}
