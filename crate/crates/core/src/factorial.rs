//! Factorial-base expansions of points in `(0, 1]^p`.
//!
//! A point `a` is written `a = sum_{n>=2} a_n / n!` with `0 <= a_n <= n - 1`.
//! Terminating expansions are replaced by their non-terminating twin
//! (last digit lowered by one, then `n - 1` forever), so every stored prefix
//! is a prefix of the unique expansion with infinitely many nonzero digits.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numeric::{factorial, Rational};

/// Digits `y_2, ..., y_depth` of a p-vector, stored level by level.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FactorialDigits {
    p: usize,
    depth: usize,
    digits: Vec<u32>,
}

impl FactorialDigits {
    /// Builds from per-level p-vectors `levels[n - 2] = y_n`.
    pub fn from_levels(p: usize, levels: &[Vec<u32>]) -> Result<Self> {
        if p == 0 {
            return Err(Error::Domain("dimension p must be positive".into()));
        }
        if levels.is_empty() {
            return Err(Error::Domain("at least one level (n = 2) is required".into()));
        }
        let mut digits = Vec::with_capacity(levels.len() * p);
        for (offset, level) in levels.iter().enumerate() {
            let n = offset + 2;
            if level.len() != p {
                return Err(Error::DimensionMismatch { expected: p, got: level.len() });
            }
            if let Some(&bad) = level.iter().find(|&&d| d as usize >= n) {
                return Err(Error::OutOfRange {
                    what: "digit",
                    detail: format!("y_{n} = {bad} exceeds {}", n - 1),
                });
            }
            digits.extend_from_slice(level);
        }
        Ok(Self { p, depth: levels.len() + 1, digits })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Index of the last stored level.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// The p-vector `y_n`, `2 <= n <= depth`.
    pub fn level(&self, n: usize) -> &[u32] {
        assert!((2..=self.depth).contains(&n), "level {n} outside 2..={}", self.depth);
        let start = (n - 2) * self.p;
        &self.digits[start..start + self.p]
    }

    pub fn levels(&self) -> impl Iterator<Item = (usize, &[u32])> {
        self.digits.chunks(self.p).enumerate().map(|(i, l)| (i + 2, l))
    }

    /// Keeps levels `2..=depth`.
    pub fn truncated(&self, depth: usize) -> Result<Self> {
        if depth < 2 || depth > self.depth {
            return Err(Error::OutOfRange { what: "depth", detail: format!("{depth} not in 2..={}", self.depth) });
        }
        Ok(Self { p: self.p, depth, digits: self.digits[..(depth - 1) * self.p].to_vec() })
    }

    /// Appends uniformly random digits up to `depth`.
    pub fn extend_random<R: Rng + ?Sized>(&self, depth: usize, rng: &mut R) -> Self {
        let mut digits = self.digits.clone();
        for n in self.depth + 1..=depth {
            for _ in 0..self.p {
                digits.push(rng.random_range(0..n as u32));
            }
        }
        Self { p: self.p, depth: depth.max(self.depth), digits }
    }

    /// Uniformly random digits for levels `2..=depth`.
    pub fn random<R: Rng + ?Sized>(p: usize, depth: usize, rng: &mut R) -> Self {
        assert!(p > 0 && depth >= 2);
        let mut digits = Vec::with_capacity((depth - 1) * p);
        for n in 2..=depth {
            for _ in 0..p {
                digits.push(rng.random_range(0..n as u32));
            }
        }
        Self { p, depth, digits }
    }

    /// Expands each component of `a` (all in `(0, 1]`) to `depth` levels.
    pub fn expand(a: &[Rational], depth: usize) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::Domain("empty point".into()));
        }
        if depth < 2 {
            return Err(Error::OutOfRange { what: "depth", detail: format!("{depth} < 2") });
        }
        let p = a.len();
        let mut digits = vec![0u32; (depth - 1) * p];
        for (i, component) in a.iter().enumerate() {
            if !component.is_positive() || component > &Rational::one() {
                return Err(Error::Domain(format!("component {component} outside (0,1]")));
            }
            // Invariant: remainder in (0, 1]. Choosing ceil(r) - 1 keeps it there,
            // which is exactly the non-terminating representative.
            let mut remainder = component.clone();
            for n in 2..=depth {
                let scaled = remainder * Rational::from_integer(BigInt::from(n));
                let digit = scaled.ceil() - Rational::one();
                remainder = &scaled - &digit;
                digits[(n - 2) * p + i] = digit.to_integer().to_u32().expect("digit below n");
            }
        }
        Ok(Self { p, depth, digits })
    }

    /// `y^(k) = sum_{n=2}^{k-1} y_n / n!`, exactly.
    pub fn value(&self, k: usize) -> Result<Vec<Rational>> {
        Ok(self.values_at(&[k])?.pop().expect("one stop"))
    }

    /// `y^(k)` for several truncation points in one pass.
    pub fn values_at(&self, stops: &[usize]) -> Result<Vec<Vec<Rational>>> {
        for &k in stops {
            if k < 2 || k > self.depth + 1 {
                return Err(Error::OutOfRange { what: "truncation", detail: format!("{k} not in 2..={}", self.depth + 1) });
            }
        }
        let max = stops.iter().copied().max().unwrap_or(2);
        // Horner in factorial base: acc_k = acc_{k-1} * (k-1) + y_{k-1}, value = acc_k / (k-1)!
        let mut acc = vec![BigInt::zero(); self.p];
        let mut snapshots: Vec<Option<Vec<BigInt>>> = vec![None; max + 1];
        if stops.contains(&2) {
            snapshots[2] = Some(acc.clone());
        }
        for n in 2..max {
            for (i, a) in acc.iter_mut().enumerate() {
                *a = &*a * n + self.level(n)[i];
            }
            if stops.contains(&(n + 1)) {
                snapshots[n + 1] = Some(acc.clone());
            }
        }
        Ok(stops
            .iter()
            .map(|&k| {
                let denom = BigInt::from(factorial(k as u64 - 1));
                snapshots[k]
                    .as_ref()
                    .expect("snapshot")
                    .iter()
                    .map(|num| Rational::new(num.clone(), denom.clone()))
                    .collect()
            })
            .collect())
    }

    /// Largest `N <= depth` with `y_n == ybar_n` for all `2 <= n <= N`; `1` if they differ at `n = 2`.
    pub fn agreement_depth(&self, other: &Self) -> Result<usize> {
        if self.p != other.p {
            return Err(Error::DimensionMismatch { expected: self.p, got: other.p });
        }
        if self.depth != other.depth {
            return Err(Error::DimensionMismatch { expected: self.depth, got: other.depth });
        }
        let first_diff = self.levels().zip(other.levels()).find(|((_, a), (_, b))| a != b).map(|((n, _), _)| n);
        Ok(first_diff.map_or(self.depth, |n| n - 1))
    }

    /// Mixed-radix rank of the prefix `(y_2, ..., y_{k-1})` among all such prefixes.
    pub fn prefix_rank(&self, k: usize) -> u64 {
        let mut rank = 0u64;
        for n in 2..k {
            for &d in self.level(n) {
                rank = rank * n as u64 + u64::from(d);
            }
        }
        rank
    }
}

/// `1 / (N - 1)!`, the sum `sum_{n>=N} (n - 1) / n!`.
pub fn tail_bound(n: usize) -> Result<Rational> {
    if n < 2 {
        return Err(Error::OutOfRange { what: "tail start", detail: format!("{n} < 2") });
    }
    Ok(Rational::new(BigInt::one(), BigInt::from(factorial(n as u64 - 1))))
}

impl fmt::Display for FactorialDigits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p={}", self.p)?;
        for (n, level) in self.levels() {
            write!(f, ";{n}:")?;
            for (i, d) in level.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{d}")?;
            }
        }
        Ok(())
    }
}

impl FromStr for FactorialDigits {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::Parse(format!("digit text {s:?}: {why}"));
        let mut parts = s.trim().split(';');
        let header = parts.next().ok_or_else(|| bad("empty"))?;
        let p: usize = header
            .strip_prefix("p=")
            .ok_or_else(|| bad("missing p= header"))?
            .parse()
            .map_err(|_| bad("bad p"))?;
        let mut levels = Vec::new();
        for (offset, part) in parts.enumerate() {
            let (n, vector) = part.split_once(':').ok_or_else(|| bad("level without ':'"))?;
            let n: usize = n.parse().map_err(|_| bad("bad level index"))?;
            if n != offset + 2 {
                return Err(bad("levels must be consecutive from 2"));
            }
            let level = vector
                .split(',')
                .map(|d| d.parse::<u32>().map_err(|_| bad("bad digit")))
                .collect::<Result<Vec<_>>>()?;
            levels.push(level);
        }
        Self::from_levels(p, &levels)
    }
}

impl Serialize for FactorialDigits {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for FactorialDigits {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}
