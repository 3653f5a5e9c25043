//! Floating-point scalar abstraction: the whole engine is generic over
//! `Scalar`, with `f64` as the default working type (see the aliases at the
//! crate root).

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar: f32 or f64.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Shorthand for converting an `f64` literal.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Shorthand for converting a `usize` count.
    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("usize representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Gamma function at integer or half-integer arguments `x = half/2`,
/// `half >= 1`. Covers everything needed for unit-sphere areas and ball
/// volumes in dimension n >= 3.
pub fn gamma_half_integer(half: usize) -> f64 {
    assert!(half >= 1, "gamma_half_integer requires half >= 1");
    if half % 2 == 0 {
        // gamma(k) = (k-1)!
        let k = half / 2;
        (1..k).map(|i| i as f64).product()
    } else {
        // gamma(k + 1/2) = (2k)! / (4^k k!) * sqrt(pi)
        let mut acc = std::f64::consts::PI.sqrt();
        let mut x = 0.5;
        while x + 1.0 <= half as f64 / 2.0 + 1e-9 {
            acc *= x;
            x += 1.0;
        }
        acc
    }
}

/// Surface area of the unit sphere S^{n-1} in R^n.
pub fn unit_sphere_area(n: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf(n as f64 / 2.0) / gamma_half_integer(n)
}

/// Lebesgue measure of the unit ball B_1 in R^n.
pub fn unit_ball_volume(n: usize) -> f64 {
    std::f64::consts::PI.powf(n as f64 / 2.0) / gamma_half_integer(n + 2)
}
