//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Never fails for the implemented types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn as_f32(self) -> f32 {
        self.to_f32().unwrap_or(f32::NAN)
    }

    /// Tolerance used when validating rotation matrices and similar
    /// algebraic identities: 1e-9 for `f64`, scaled to the type's epsilon
    /// otherwise.
    #[inline]
    fn identity_tolerance() -> Self {
        let floor = Self::epsilon() * Self::lit(64.0);
        Self::lit(1e-9).max(floor)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Wraps an angle into `[-pi, pi)`.
#[inline]
pub fn wrap_angle<T: Real>(a: T) -> T {
    let two_pi = T::TAU();
    let mut w = a - two_pi * ((a + T::PI()) / two_pi).floor();
    if w >= T::PI() {
        w = w - two_pi;
    }
    if w < -T::PI() {
        w = -T::PI();
    }
    w
}

/// Euclidean remainder for a continuous coordinate on a ring of length `n`.
#[inline]
pub fn wrap_coord<T: Real>(x: T, n: T) -> T {
    let mut r = x - n * (x / n).floor();
    if r >= n {
        r = r - n;
    }
    if r < T::zero() {
        r = T::zero();
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn wrap_angle_half_open() {
        assert_eq!(wrap_angle(PI), -PI);
        assert_eq!(wrap_angle(-PI), -PI);
        assert!((wrap_angle(3.0 * PI + 0.25) - (-PI + 0.25)).abs() < 1e-12);
        assert!((wrap_angle(0.1f64) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn wrap_coord_ring() {
        assert_eq!(wrap_coord(-0.5f64, 8.0), 7.5);
        assert_eq!(wrap_coord(8.0f64, 8.0), 0.0);
        assert_eq!(wrap_coord(3.25f64, 8.0), 3.25);
    }
}
