use std::cmp::Ordering;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigUint;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use super::{ln_natural, ln_rational_abs, Rational};

/// A real number stored as `sign * exp(ln_abs)`.
///
/// `ln_abs` is meaningless (and kept at `0.0`) when `sign == 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogMagnitude {
    pub sign: i8,
    pub ln_abs: f64,
}

/// `ln(e^a + e^b)` without overflow.
#[inline]
pub(crate) fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(e^a - e^b)` for `a > b`.
#[inline]
pub(crate) fn logsubexp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    let d = b - a;
    // ln(1 - e^d), switching formulas around d = -ln 2 for accuracy
    let tail = if d > -std::f64::consts::LN_2 { (-d.exp_m1()).ln() } else { (-d.exp()).ln_1p() };
    a + tail
}

impl LogMagnitude {
    pub const ZERO: Self = Self { sign: 0, ln_abs: 0.0 };
    pub const ONE: Self = Self { sign: 1, ln_abs: 0.0 };

    /// Positive value `exp(ln_abs)`.
    pub fn from_ln(ln_abs: f64) -> Self {
        if ln_abs == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            Self { sign: 1, ln_abs }
        }
    }

    pub fn from_f64(x: f64) -> Self {
        if x == 0.0 {
            Self::ZERO
        } else {
            Self { sign: if x > 0.0 { 1 } else { -1 }, ln_abs: x.abs().ln() }
        }
    }

    pub fn from_natural(n: &BigUint) -> Self {
        if n.is_zero() {
            Self::ZERO
        } else {
            Self::from_ln(ln_natural(n))
        }
    }

    pub fn from_rational(r: &Rational) -> Self {
        if r.is_zero() {
            Self::ZERO
        } else {
            Self { sign: if r.is_negative() { -1 } else { 1 }, ln_abs: ln_rational_abs(r) }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    /// Saturates to `0` or `±inf` outside the `f64` range.
    pub fn to_f64(self) -> f64 {
        f64::from(self.sign) * if self.sign == 0 { 0.0 } else { self.ln_abs.exp() }
    }

    pub fn abs(self) -> Self {
        if self.sign == 0 {
            self
        } else {
            Self { sign: 1, ..self }
        }
    }

    /// `ln |x|`, `-inf` for zero.
    pub fn ln_abs_or_neg_inf(&self) -> f64 {
        if self.sign == 0 {
            f64::NEG_INFINITY
        } else {
            self.ln_abs
        }
    }

    pub fn powi(self, n: i32) -> Self {
        match (self.sign, n) {
            (_, 0) => Self::ONE,
            (0, _) => Self::ZERO,
            (s, n) => Self { sign: if n % 2 == 0 { 1 } else { s }, ln_abs: self.ln_abs * f64::from(n) },
        }
    }

    /// Compares absolute values.
    pub fn cmp_abs(&self, other: &Self) -> Ordering {
        self.ln_abs_or_neg_inf().total_cmp(&other.ln_abs_or_neg_inf())
    }

    /// Sum of many terms.
    pub fn sum<I: IntoIterator<Item = Self>>(terms: I) -> Self {
        terms.into_iter().fold(Self::ZERO, |acc, t| acc + t)
    }
}

impl Mul for LogMagnitude {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        if self.sign == 0 || rhs.sign == 0 {
            return Self::ZERO;
        }
        Self { sign: self.sign * rhs.sign, ln_abs: self.ln_abs + rhs.ln_abs }
    }
}

impl Div for LogMagnitude {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        assert!(rhs.sign != 0, "LogMagnitude division by zero");
        if self.sign == 0 {
            return Self::ZERO;
        }
        Self { sign: self.sign * rhs.sign, ln_abs: self.ln_abs - rhs.ln_abs }
    }
}

impl Neg for LogMagnitude {
    type Output = Self;
    fn neg(self) -> Self {
        Self { sign: -self.sign, ..self }
    }
}

impl Add for LogMagnitude {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        if self.sign == 0 {
            return rhs;
        }
        if rhs.sign == 0 {
            return self;
        }
        if self.sign == rhs.sign {
            return Self { sign: self.sign, ln_abs: logaddexp(self.ln_abs, rhs.ln_abs) };
        }
        let (big, small) = match self.ln_abs.total_cmp(&rhs.ln_abs) {
            Ordering::Equal => return Self::ZERO,
            Ordering::Greater => (self, rhs),
            Ordering::Less => (rhs, self),
        };
        Self { sign: big.sign, ln_abs: logsubexp(big.ln_abs, small.ln_abs) }
    }
}

impl Sub for LogMagnitude {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use proptest::prelude::*;

    #[test]
    fn zero_and_one() {
        assert_eq!(LogMagnitude::from_f64(0.0), LogMagnitude::ZERO);
        assert_eq!(LogMagnitude::from_f64(1.0), LogMagnitude::ONE);
        assert_eq!((LogMagnitude::ONE - LogMagnitude::ONE), LogMagnitude::ZERO);
    }

    #[test]
    fn natural_round_trip_below_1e15() {
        for n in [1u64, 2, 7, 1_000_003, 999_999_999_999_989] {
            let lm = LogMagnitude::from_natural(&BigUint::from(n));
            let back = lm.ln_abs;
            let exact = (n as f64).ln();
            assert!((back - exact).abs() <= f64::EPSILON * exact.abs().max(1.0));
        }
    }

    #[test]
    fn addition_never_overflows() {
        let a = LogMagnitude::from_ln(1.0e6);
        let s = a + a;
        assert!((s.ln_abs - (1.0e6 + std::f64::consts::LN_2)).abs() < 1e-9);
        let tiny = LogMagnitude::from_ln(-1.0e6);
        assert_eq!((a + tiny).ln_abs, a.ln_abs);
    }

    proptest! {
        #[test]
        fn add_matches_f64(x in -1.0e3f64..1.0e3, y in -1.0e3f64..1.0e3) {
            let s = (LogMagnitude::from_f64(x) + LogMagnitude::from_f64(y)).to_f64();
            let tol = 1e-12 * (x.abs() + y.abs()).max(1e-300);
            prop_assert!((s - (x + y)).abs() <= tol, "{} vs {}", s, x + y);
        }

        #[test]
        fn mul_associative_within_4_ulps(a in -700.0f64..700.0, b in -700.0f64..700.0, c in -700.0f64..700.0) {
            let (x, y, z) = (LogMagnitude::from_ln(a), LogMagnitude::from_ln(b), LogMagnitude::from_ln(c));
            let l = ((x * y) * z).ln_abs;
            let r = (x * (y * z)).ln_abs;
            let ulp = f64::EPSILON * a.abs().max(b.abs()).max(c.abs()).max(l.abs());
            prop_assert!((l - r).abs() <= 4.0 * ulp);
        }
    }
}
