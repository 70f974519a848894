use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::log_magnitude::{logaddexp, logsubexp};

/// Tops at height >= 1 live in `[LEVEL_FLOOR, exp(LEVEL_FLOOR))`.
const LEVEL_FLOOR: f64 = 600.0;

fn level_ceiling() -> f64 {
    LEVEL_FLOOR.exp()
}

/// Level-index number: `sign * exp^height(top)`.
///
/// Holds magnitudes such as `ln((N-1)!)` for `N ~ exp(10^600)`, where even the
/// logarithm overflows an `f64`. The representation is canonical, so
/// magnitudes compare lexicographically on `(height, top)`.
///
/// Precision is that of `top`: at height >= 2 adding anything not larger than
/// the value itself is below resolution and leaves it unchanged.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogTower {
    sign: i8,
    height: u32,
    top: f64,
}

impl LogTower {
    pub const ZERO: Self = Self { sign: 0, height: 0, top: 0.0 };
    pub const ONE: Self = Self { sign: 1, height: 0, top: 1.0 };

    pub fn from_f64(x: f64) -> Self {
        assert!(x.is_finite(), "LogTower::from_f64 needs a finite value, got {x}");
        if x == 0.0 {
            return Self::ZERO;
        }
        Self { sign: if x > 0.0 { 1 } else { -1 }, height: 0, top: x.abs() }.normalized()
    }

    /// The positive number `exp(ln_value)`.
    pub fn from_ln(ln_value: &Self) -> Self {
        ln_value.exp()
    }

    /// The positive number `exp(ln_value)` for an `f64` logarithm.
    pub fn from_ln_f64(ln_value: f64) -> Self {
        if ln_value == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        Self::from_f64(ln_value).exp()
    }

    fn normalized(mut self) -> Self {
        if self.sign == 0 {
            return Self::ZERO;
        }
        let ceiling = level_ceiling();
        loop {
            if self.top >= ceiling {
                self.top = self.top.ln();
                self.height += 1;
            } else if self.height > 0 && self.top < LEVEL_FLOOR {
                self.top = self.top.exp();
                self.height -= 1;
            } else {
                return self;
            }
        }
    }

    pub fn sign(&self) -> i8 {
        self.sign
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn top(&self) -> f64 {
        self.top
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    /// `Some(x)` when the value is an ordinary `f64`.
    pub fn to_f64_checked(&self) -> Option<f64> {
        (self.height == 0).then(|| f64::from(self.sign) * self.top)
    }

    /// Saturates to `±inf`.
    pub fn to_f64(&self) -> f64 {
        self.to_f64_checked().unwrap_or(f64::from(self.sign) * f64::INFINITY)
    }

    /// `ln |x|` as an `f64`; `inf` once that overflows.
    pub fn ln_f64(&self) -> f64 {
        match (self.sign, self.height) {
            (0, _) => f64::NEG_INFINITY,
            (_, 0) => self.top.ln(),
            (_, 1) => self.top,
            _ => f64::INFINITY,
        }
    }

    pub fn abs(&self) -> Self {
        Self { sign: self.sign.abs(), ..*self }
    }

    pub fn neg(&self) -> Self {
        Self { sign: -self.sign, ..*self }
    }

    /// `ln x` for `x > 0`.
    pub fn ln(&self) -> Self {
        assert!(self.sign > 0, "logarithm of a non-positive LogTower");
        if self.height == 0 {
            Self::from_f64(self.top.ln())
        } else {
            Self { sign: 1, height: self.height - 1, top: self.top }.normalized()
        }
    }

    /// `exp x`; values below the `f64` range flush to zero.
    pub fn exp(&self) -> Self {
        match self.sign {
            0 => Self::ONE,
            s if s > 0 => {
                if self.height == 0 && self.top < 700.0 {
                    Self::from_f64(self.top.exp())
                } else {
                    Self { sign: 1, height: self.height + 1, top: self.top }.normalized()
                }
            }
            _ => {
                if self.height == 0 {
                    let v = (-self.top).exp();
                    if v == 0.0 {
                        Self::ZERO
                    } else {
                        Self::from_f64(v)
                    }
                } else {
                    Self::ZERO
                }
            }
        }
    }

    pub fn cmp_abs(&self, other: &Self) -> Ordering {
        match (self.sign == 0, other.sign == 0) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            _ => self.height.cmp(&other.height).then(self.top.total_cmp(&other.top)),
        }
    }

    fn magnitude_sum(big: &Self, small: &Self) -> Self {
        match big.height {
            0 => Self::from_f64(big.top + small.top),
            1 => Self::from_ln_f64(logaddexp(big.top, small.abs().ln_f64())),
            _ => big.abs(),
        }
    }

    fn magnitude_difference(big: &Self, small: &Self) -> Self {
        if big.height == small.height && big.top == small.top {
            return Self::ZERO;
        }
        match big.height {
            0 => Self::from_f64(big.top - small.top),
            1 => Self::from_ln_f64(logsubexp(big.top, small.abs().ln_f64())),
            _ => big.abs(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        if self.sign == 0 {
            return *other;
        }
        if other.sign == 0 {
            return *self;
        }
        let (big, small) = if self.cmp_abs(other) == Ordering::Less { (other, self) } else { (self, other) };
        let magnitude = if big.sign == small.sign {
            Self::magnitude_sum(big, small)
        } else {
            Self::magnitude_difference(big, small)
        };
        if big.sign < 0 {
            magnitude.neg()
        } else {
            magnitude
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.sign == 0 || other.sign == 0 {
            return Self::ZERO;
        }
        let sign = self.sign * other.sign;
        if self.height == 0 && other.height == 0 {
            let p = self.top * other.top;
            if p.is_finite() && p > 0.0 {
                let r = Self::from_f64(p);
                return if sign < 0 { r.neg() } else { r };
            }
        }
        let magnitude = self.abs().ln().add(&other.abs().ln()).exp();
        if sign < 0 {
            magnitude.neg()
        } else {
            magnitude
        }
    }

    pub fn mul_f64(&self, x: f64) -> Self {
        self.mul(&Self::from_f64(x))
    }
}

impl PartialOrd for LogTower {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.total_cmp(other))
    }
}

impl LogTower {
    pub fn total_cmp(&self, other: &Self) -> Ordering {
        match self.sign.cmp(&other.sign) {
            Ordering::Equal => {
                let m = self.cmp_abs(other);
                if self.sign < 0 {
                    m.reverse()
                } else {
                    m
                }
            }
            o => o,
        }
    }
}

impl fmt::Display for LogTower {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.sign < 0 { "-" } else { "" };
        match self.height {
            0 => write!(f, "{sign}{}", self.top),
            h => write!(f, "{sign}exp^{h}({})", self.top),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalization_raises_and_lowers() {
        let big = LogTower::from_f64(1.0e300);
        assert_eq!(big.height(), 1);
        assert!((big.top() - 1.0e300f64.ln()).abs() < 1e-12);
        assert_eq!(big.to_f64_checked(), None);
        let back = big.ln();
        assert_eq!(back.height(), 0);
        assert!((back.to_f64() - 1.0e300f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn exp_of_huge_values_stacks() {
        let x = LogTower::from_f64(1.0e5);
        let e = x.exp();
        assert_eq!(e.height(), 1);
        let ee = e.exp();
        assert_eq!(ee.height(), 2);
        assert_eq!(ee.ln().ln().to_f64(), 1.0e5);
        assert!(ee > e && e > x);
        assert!(ee.neg() < e.neg());
    }

    #[test]
    fn addition_at_height_one_uses_logaddexp() {
        let a = LogTower::from_ln_f64(1000.0);
        let s = a.add(&a);
        assert!((s.ln_f64() - (1000.0 + std::f64::consts::LN_2)).abs() < 1e-12);
        assert_eq!(a.sub(&a), LogTower::ZERO);
        let d = s.sub(&a);
        assert!((d.ln_f64() - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn small_values_stay_exact() {
        let a = LogTower::from_f64(3.5);
        let b = LogTower::from_f64(-1.25);
        assert_eq!(a.add(&b).to_f64(), 2.25);
        assert_eq!(a.mul(&b).to_f64(), -4.375);
        assert_eq!(b.exp().to_f64(), (-1.25f64).exp());
        assert!(LogTower::from_f64(-1.0e6).exp().is_zero());
    }

    #[test]
    fn multiplication_of_towers() {
        // (e^{e^700})^2 has ln = 2 e^700
        let t = LogTower::from_ln_f64(700.0).exp();
        let sq = t.mul(&t);
        assert_eq!(sq.height(), 2);
        assert!((sq.ln().ln_f64() - (700.0 + std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn serde_shape() {
        let t = LogTower::from_ln_f64(2000.0);
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, r#"{"sign":1,"height":1,"top":2000.0}"#);
        let back: LogTower = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
    }

    proptest! {
        #[test]
        fn order_matches_f64(x in -1.0e200f64..1.0e200, y in -1.0e200f64..1.0e200) {
            let (a, b) = (LogTower::from_f64(x), LogTower::from_f64(y));
            prop_assert_eq!(a.total_cmp(&b), x.total_cmp(&y));
        }

        #[test]
        fn ln_exp_round_trip(x in -600.0f64..1.0e6) {
            let t = LogTower::from_f64(x).exp().ln();
            prop_assert!((t.to_f64() - x).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}
