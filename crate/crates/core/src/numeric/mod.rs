//! Exact and log-scale arithmetic shared by every other module.
//!
//! Exact quantities use [`Rational`] (always reduced) and [`Natural`].
//! Quantities whose magnitude only fits in a logarithm use [`LogMagnitude`];
//! quantities whose *logarithm* no longer fits in an `f64` use [`LogTower`].

mod log_magnitude;
mod tower;

pub use log_magnitude::LogMagnitude;
pub use tower::LogTower;

use std::sync::OnceLock;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;
pub type Natural = BigUint;

/// Largest `n` for which `ln(n!)` is summed term by term.
pub const EXACT_LOG_FACTORIAL_MAX: u64 = 1_000_000;

/// `ln ln x` for `x > e`.
pub fn loglog(x: f64) -> Result<f64> {
    if x.is_nan() || x <= std::f64::consts::E {
        return Err(Error::Domain(format!("loglog requires x > e, got {x}")));
    }
    Ok(x.ln().ln())
}

/// `ln ln x` without the positivity guard. Callers pass `x >= 3`.
#[inline]
pub(crate) fn lnln(x: f64) -> f64 {
    x.ln().ln()
}

fn log_factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let len = EXACT_LOG_FACTORIAL_MAX as usize + 1;
        let mut table = Vec::with_capacity(len);
        // Neumaier compensated running sum of ln 2 + ... + ln n.
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        table.push(0.0);
        for i in 1..len {
            let term = (i as f64).ln();
            let t = sum + term;
            if sum.abs() >= term.abs() {
                comp += (sum - t) + term;
            } else {
                comp += (term - t) + sum;
            }
            sum = t;
            table.push(sum + comp);
        }
        table
    })
}

fn stirling_ln_factorial(n: f64) -> f64 {
    let inv = 1.0 / n;
    let inv2 = inv * inv;
    (n + 0.5) * n.ln() - n
        + 0.5 * (2.0 * std::f64::consts::PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}

/// `ln(n!)`: exact summation up to [`EXACT_LOG_FACTORIAL_MAX`], Stirling series beyond.
pub fn ln_factorial(n: u64) -> f64 {
    if n <= EXACT_LOG_FACTORIAL_MAX {
        log_factorial_table()[n as usize]
    } else {
        stirling_ln_factorial(n as f64)
    }
}

/// `n!` as a [`LogMagnitude`].
pub fn log_factorial(n: &Natural) -> LogMagnitude {
    match n.to_u64() {
        Some(small) => LogMagnitude::from_ln(ln_factorial(small)),
        None => LogMagnitude::from_ln(stirling_ln_factorial(n.to_f64().unwrap_or(f64::INFINITY))),
    }
}

/// `ln(n!)` for an `n` that is itself only known in tower form.
///
/// Uses `n ln n - n <= ln n! <= n ln n`; at the heights where this path is
/// taken the two sides agree to the resolution of the representation.
pub fn ln_factorial_tower(n: &LogTower) -> LogTower {
    if let Some(v) = n.to_f64_checked() {
        if v < 1.0e15 {
            return LogTower::from_f64(ln_factorial(v.round().max(0.0) as u64));
        }
        if v < 1.0e300 {
            return LogTower::from_f64(stirling_ln_factorial(v));
        }
    }
    // ln(ln n!) = ln n + ln(ln n - 1) + o(1)
    let ln_n = n.ln();
    let ln_n_minus_one = ln_n.add(&LogTower::from_f64(-1.0));
    ln_n.add(&ln_n_minus_one.ln()).exp()
}

/// `ln` of a natural number, valid far beyond the `f64` range.
pub fn ln_natural(n: &BigUint) -> f64 {
    let bits = n.bits();
    if bits <= 1000 {
        return n.to_f64().map_or(f64::INFINITY, f64::ln);
    }
    let shift = bits - 64;
    let top = (n >> shift).to_f64().expect("64-bit prefix");
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// `ln |r|` for a nonzero rational.
pub fn ln_rational_abs(r: &Rational) -> f64 {
    ln_natural(r.numer().magnitude()) - ln_natural(r.denom().magnitude())
}

/// Nearest `f64` of a rational, including values below the normal range.
pub fn rational_to_f64(r: &Rational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    match r.to_f64() {
        Some(v) if v.is_finite() && v != 0.0 => v,
        _ => {
            let sign = if r.is_negative() { -1.0 } else { 1.0 };
            sign * ln_rational_abs(r).exp()
        }
    }
}

pub fn factorial(n: u64) -> Natural {
    (2..=n).fold(Natural::one(), |acc, i| acc * i)
}

/// `1 / n!` exactly.
pub fn inv_factorial(n: u64) -> Rational {
    Rational::new(BigInt::one(), BigInt::from(factorial(n)))
}

/// Parses `p/q`, an integer, or a finite decimal such as `-2.375` into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a rational number: {s:?}"));
    if let Some((num, den)) = s.split_once('/') {
        let num: BigInt = num.trim().parse().map_err(|_| bad())?;
        let den: BigInt = den.trim().parse().map_err(|_| bad())?;
        if den.is_zero() {
            return Err(Error::Parse(format!("zero denominator in {s:?}")));
        }
        return Ok(Rational::new(num, den));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let negative = int.trim_start().starts_with('-');
        let int_part: BigInt = match int.trim() {
            "" | "-" | "+" => BigInt::zero(),
            other => other.parse().map_err(|_| bad())?,
        };
        let frac_part: BigInt = frac.parse().map_err(|_| bad())?;
        let scale = num_traits::pow(BigInt::from(10u32), frac.len());
        let magnitude = int_part.abs() * &scale + frac_part;
        let num = if negative { -magnitude } else { magnitude };
        return Ok(Rational::new(num, scale));
    }
    let num: BigInt = s.parse().map_err(|_| bad())?;
    Ok(Rational::from_integer(num))
}

/// Always `p/q`, even for integers.
pub fn format_rational(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Componentwise representative of `x` in the cell `(0, 1]`.
pub fn periodize_rational(x: &Rational) -> Rational {
    x - x.ceil() + Rational::one()
}

/// Greatest common divisor check used by the lowest-terms invariant.
pub fn is_reduced(r: &Rational) -> bool {
    r.denom().sign() == Sign::Plus && r.numer().gcd(r.denom()).is_one()
}

/// Serde adapters: rationals travel as `"p/q"` strings.
pub mod rational_serde {
    use super::{format_rational, parse_rational, Rational};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let text = String::deserialize(d)?;
        parse_rational(&text).map_err(serde::de::Error::custom)
    }

    pub mod vec {
        use super::*;
        use serde::ser::SerializeSeq;

        pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for r in v {
                seq.serialize_element(&format_rational(r))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
            let texts = Vec::<String>::deserialize(d)?;
            texts
                .iter()
                .map(|t| parse_rational(t).map_err(serde::de::Error::custom))
                .collect()
        }
    }
}

/// Serde adapter: naturals travel as decimal strings.
pub mod natural_serde {
    use super::Natural;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(n: &Natural, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&n.to_str_radix(10))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Natural, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}
