//! The function `psi(y) = sum_{n>=2} r_n(y_2, ..., y_{n-1}) y_n / n!`.
//!
//! `psi` is only ever handled as a ball: an exact rational truncation plus a
//! rigorous radius for everything past it. Every summand is
//! `(ticks / 2^40) * digits / n!`, so truncations are accumulated as integers
//! in factorial-base Horner form and divided once at the end.

use std::sync::OnceLock;

use num_bigint::BigInt;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::dense::{DenseMaps, GRID_DENOMINATOR};
use crate::error::{Error, Result};
use crate::factorial::FactorialDigits;
use crate::numeric::{factorial, ln_factorial, lnln, rational_serde, rational_to_f64, Natural, Rational};

/// `psi^(N)(y)` together with a radius covering `psi(y) - psi^(N)(y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiTruncation {
    pub digits: FactorialDigits,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(with = "rational_serde::vec")]
    pub value: Vec<Rational>,
    pub tail_radius: f64,
}

impl PsiTruncation {
    pub fn value_f64(&self) -> Vec<f64> {
        self.value.iter().map(rational_to_f64).collect()
    }
}

/// Terms summed explicitly before switching to the ratio-test bound.
const CONSTANT_SUM_LIMIT: usize = 2000;

/// `N! sum_{n > N} (n - 1) lnln(n) / n!`, as an upper bound.
fn scaled_tail_after(n: usize) -> f64 {
    let mut weight = 1.0f64;
    let mut acc = 0.0f64;
    let mut last = 0.0f64;
    for m in n + 1..=CONSTANT_SUM_LIMIT.max(n + 1) {
        weight /= m as f64;
        last = (m as f64 - 1.0) * lnln(m as f64) * weight;
        acc += last;
    }
    // Successive terms shrink by at least a factor 2/L beyond L = 2000, so the
    // remainder is below the last term times a geometric series.
    let ratio = 2.0 / CONSTANT_SUM_LIMIT as f64;
    acc + last * ratio / (1.0 - ratio)
}

/// Certified constant `C` with `sum_{n > N} (n - 1) lnln(n) / n! <= C lnln(N) / N!`
/// for every `N >= 3`; the supremum over `[3, 200]`, rounded up to one decimal.
pub fn psi_tail_constant() -> f64 {
    static CONSTANT: OnceLock<f64> = OnceLock::new();
    *CONSTANT.get_or_init(|| {
        let sup = (3..=200).map(|n| scaled_tail_after(n) / lnln(n as f64)).fold(0.0f64, f64::max);
        (sup * 10.0).ceil() / 10.0
    })
}

/// `sum_{n >= start} (n - 1) lnln(n) / n!` for `start >= 3`.
fn weighted_tail_sum(start: usize) -> f64 {
    assert!(start >= 3);
    let own = (start as f64 - 1.0) * lnln(start as f64) * (-ln_factorial(start as u64)).exp();
    own + scaled_tail_after(start) * (-ln_factorial(start as u64)).exp()
}

/// Bound on `|psi(y) - psi^(N)(y)|` per entry, for `p = 1`; scale by `p`.
///
/// Uses `|r_n| <= lnln n` entrywise and `y_n <= n - 1`. For `N = 2` the
/// `r_2 y_2 / 2` term (at most `1/2`) is included.
pub fn psi_tail(n: usize) -> f64 {
    match n {
        0..=2 => 0.5 + psi_tail(3),
        // the closed form is not monotone between 3 and 4
        3 => 2.0 * lnln(3.0) / 6.0 + psi_tail(4),
        // (N - 1) lnln N / N! for the first term, C lnln N / N! for the rest
        _ => (n as f64 - 1.0 + psi_tail_constant()) * lnln(n as f64) * (-ln_factorial(n as u64)).exp(),
    }
}

/// `ln` of [`psi_tail`], usable where the value itself underflows.
pub fn ln_psi_tail(n: u64) -> f64 {
    if n <= 3 {
        return psi_tail(n as usize).ln();
    }
    let nf = n as f64;
    (nf - 1.0 + psi_tail_constant()).ln() + lnln(nf).ln() - ln_factorial(n)
}

/// Entrywise bound on `psi` over `(0, 1]^p`.
///
/// `r_3` vanishes identically (the level-3 grid is `{0}`), so the sum of
/// bounds starts at `n = 4`.
pub fn psi_bound(p: usize) -> f64 {
    static UNIT: OnceLock<f64> = OnceLock::new();
    let unit = *UNIT.get_or_init(|| 0.5 + weighted_tail_sum(4));
    p as f64 * unit * (1.0 + 1e-12)
}

/// Componentwise representative in `(0, 1]`; integers map to `1`.
pub fn periodize(y: &[f64]) -> Vec<f64> {
    y.iter()
        .map(|&x| {
            assert!(x.is_finite(), "periodize needs finite input");
            x - x.ceil() + 1.0
        })
        .collect()
}

/// Integer numerators of `r_n(y) y_n` over `2^40`, for `n = 2..stop`.
fn summand_numerators(maps: &DenseMaps, y: &FactorialDigits, stop: usize) -> Result<Vec<Vec<BigInt>>> {
    let (p, q) = (maps.p(), maps.q());
    if y.p() != p {
        return Err(Error::DimensionMismatch { expected: p, got: y.p() });
    }
    if stop >= 3 && y.depth() + 1 < stop {
        return Err(Error::OutOfRange {
            what: "digit depth",
            detail: format!("psi^({stop}) needs y_2..y_{}, have up to y_{}", stop - 1, y.depth()),
        });
    }
    (2..stop)
        .map(|n| {
            let ticks = maps.r_ticks(&Natural::from(n), y)?;
            let digits = y.level(n);
            Ok((0..q)
                .map(|row| {
                    let s: i128 = (0..p).map(|c| i128::from(ticks[row * p + c]) * i128::from(digits[c])).sum();
                    BigInt::from(s)
                })
                .collect())
        })
        .collect()
}

/// `psi^(N)(y)` for several `N` in one pass over the summands.
pub fn partial_sums(maps: &DenseMaps, y: &FactorialDigits, stops: &[usize]) -> Result<Vec<PsiTruncation>> {
    let max = stops.iter().copied().max().unwrap_or(2);
    if let Some(&bad) = stops.iter().find(|&&s| s < 2) {
        return Err(Error::OutOfRange { what: "truncation", detail: format!("{bad} < 2") });
    }
    let summands = summand_numerators(maps, y, max)?;
    let q = maps.q();
    let mut acc = vec![BigInt::zero(); q];
    let mut snapshots: Vec<Option<Vec<BigInt>>> = vec![None; max + 1];
    if stops.contains(&2) {
        snapshots[2] = Some(acc.clone());
    }
    for n in 2..max {
        for (a, s) in acc.iter_mut().zip(&summands[n - 2]) {
            *a = &*a * n + s;
        }
        if stops.contains(&(n + 1)) {
            snapshots[n + 1] = Some(acc.clone());
        }
    }
    let p = maps.p() as f64;
    Ok(stops
        .iter()
        .map(|&stop| {
            let denom = BigInt::from(factorial(stop as u64 - 1)) * GRID_DENOMINATOR;
            PsiTruncation {
                digits: y.clone(),
                n: stop,
                value: snapshots[stop]
                    .as_ref()
                    .expect("snapshot")
                    .iter()
                    .map(|num| Rational::new(num.clone(), denom.clone()))
                    .collect(),
                tail_radius: p * psi_tail(stop),
            }
        })
        .collect())
}

/// `psi^(N)(y) = sum_{n=2}^{N-1} r_n(y_2, ..., y_{n-1}) y_n / n!` with its tail radius.
pub fn psi_truncated(maps: &DenseMaps, y: &FactorialDigits, n: usize) -> Result<PsiTruncation> {
    Ok(partial_sums(maps, y, &[n])?.pop().expect("one stop"))
}
