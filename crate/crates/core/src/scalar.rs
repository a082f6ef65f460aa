//! Scalar types the algebraic code is generic over.
//!
//! The closed-form inverse maps and the moment map are written once and
//! evaluated in `f64`, in double-double ([`Dd`]) when rounding matters, or in
//! `Complex64` when complex branches of a quadratic are wanted.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Rem, Sub};

use num_complex::Complex64;
use num_traits::{Num, One, Zero};
use twofloat::TwoFloat;

pub trait Scalar: Num + Neg<Output = Self> + Copy + Debug + Send + Sync + 'static {
    fn from_f64(x: f64) -> Self;
    /// Principal square root. Real types return NaN for negative input.
    fn sqrt(self) -> Self;
    fn re(self) -> f64;
    fn im(self) -> f64;
    fn modulus(self) -> f64;
}

/// Ordered scalars.
pub trait Real: Scalar + PartialOrd {
    fn abs(self) -> Self;
    fn to_f64(self) -> f64 {
        self.re()
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn re(self) -> f64 {
        self
    }
    fn im(self) -> f64 {
        0.0
    }
    fn modulus(self) -> f64 {
        f64::abs(self)
    }
}

impl Real for f64 {
    fn abs(self) -> Self {
        f64::abs(self)
    }
}

/// Double-double number (about 32 significant digits).
///
/// Addition and multiplication come from `twofloat`. Its `TwoFloat / TwoFloat`
/// only reaches f64 accuracy, so division is done here by long division.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd)]
pub struct Dd(TwoFloat);

impl Dd {
    pub const fn from_f64(x: f64) -> Self {
        Dd(TwoFloat::from_f64(x))
    }
    pub fn hi(self) -> f64 {
        self.0.hi()
    }
    pub fn lo(self) -> f64 {
        self.0.lo()
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, rhs: Dd) -> Dd {
        Dd(self.0 + rhs.0)
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, rhs: Dd) -> Dd {
        Dd(self.0 - rhs.0)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, rhs: Dd) -> Dd {
        Dd(self.0 * rhs.0)
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, rhs: Dd) -> Dd {
        let b = rhs.0;
        let q1 = self.0.hi() / b.hi();
        let r = self.0 - b * q1;
        let q2 = r.hi() / b.hi();
        let r = r - b * q2;
        let q3 = r.hi() / b.hi();
        Dd(TwoFloat::from(q1) + q2 + q3)
    }
}

impl Rem for Dd {
    type Output = Dd;
    fn rem(self, rhs: Dd) -> Dd {
        Dd(self.0 % rhs.0)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd(-self.0)
    }
}

impl Zero for Dd {
    fn zero() -> Self {
        Dd::from_f64(0.0)
    }
    fn is_zero(&self) -> bool {
        self.0.hi() == 0.0
    }
}

impl One for Dd {
    fn one() -> Self {
        Dd::from_f64(1.0)
    }
}

impl Num for Dd {
    type FromStrRadixErr = <f64 as Num>::FromStrRadixErr;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        f64::from_str_radix(s, radix).map(Dd::from_f64)
    }
}

impl Scalar for Dd {
    fn from_f64(x: f64) -> Self {
        Dd::from_f64(x)
    }
    fn sqrt(self) -> Self {
        if self.hi() < 0.0 {
            return Dd::from_f64(f64::NAN);
        }
        if self.hi() == 0.0 {
            return Dd::from_f64(0.0);
        }
        // One Newton step from the f64 root is enough for double-double.
        let r = Dd::from_f64(self.hi().sqrt());
        (r + self / r) * Dd::from_f64(0.5)
    }
    fn re(self) -> f64 {
        self.hi() + self.lo()
    }
    fn im(self) -> f64 {
        0.0
    }
    fn modulus(self) -> f64 {
        self.hi().abs()
    }
}

impl Real for Dd {
    fn abs(self) -> Self {
        if self.hi() < 0.0 {
            -self
        } else {
            self
        }
    }
}

impl Scalar for Complex64 {
    fn from_f64(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn sqrt(self) -> Self {
        Complex64::sqrt(self)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn im(self) -> f64 {
        self.im
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
}
