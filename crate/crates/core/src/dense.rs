//! Dense finite families of matrix-valued maps on digit prefixes, and the
//! sequence `(r_n)` that contains an extension of every one of them.
//!
//! Level `k` works with the prefix set `D_k = {(y_2, ..., y_{k-1})}` of size
//! `(k-1)!^p` and a grid of `G_k` values in `[-lnln k, lnln k]`. A map
//! `D_k -> grid^{q x p}` is identified by `j - 1 < m_k = G_k^{pq (k-1)!^p}`
//! written in base `G_k`: digit `rank * pq + e` is the grid index of matrix
//! entry `e` (row-major) at the prefix with lexicographic rank `rank`.
//! Maps are never materialized; `eval_map` extracts one digit group.
//!
//! The sequence puts `r_2` (all ones) at position 2 and then one block per
//! level, `k = 3, 4, ...`, with `j` ascending inside a block, so
//! `N = 2 + sum_{3 <= l < k} m_l + j`. Every `r_N` is the extension of its
//! block's map that ignores digits beyond `y_{k-1}`.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::factorial::FactorialDigits;
use crate::numeric::{ln_factorial, ln_natural, lnln, natural_serde, LogTower, Natural};

/// Grid values are rationals with denominator `2^GRID_BITS`.
pub const GRID_BITS: u32 = 40;
pub const GRID_DENOMINATOR: i64 = 1 << GRID_BITS;

const MAX_CACHED_LEVEL: usize = 64;

/// Limits of the exact regime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapCaps {
    /// Largest `|D_k| = (k-1)!^p` that may be enumerated.
    pub tuple_cap: u64,
    /// Largest decimal digit count of an exact `m_k`.
    pub digit_cap: u64,
}

impl Default for MapCaps {
    fn default() -> Self {
        Self { tuple_cap: 1_000_000, digit_cap: 1_000_000 }
    }
}

/// Number of grid points at level `k`: `floor(k lnln k) + 1`, cell-centred,
/// bumped if rounding to `2^-40` could eat the strict `1/k` margin.
pub fn grid_count(k: u64) -> u64 {
    assert!(k >= 3, "grid levels start at 3");
    let half_width = lnln(k as f64);
    let slack = 2f64.powi(-38);
    let mut count = (k as f64 * half_width).floor() as u64 + 1;
    while 1.0 / k as f64 - half_width / count as f64 <= slack {
        count += 1;
    }
    count
}

/// Equally spaced, cell-centred points of `[-L, L]`, `L = lnln k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub k: u64,
    pub half_width: f64,
    /// Point `i` is `ticks[i] / 2^40`, strictly increasing and symmetric about 0.
    pub ticks: Vec<i64>,
    /// Largest distance from any point of `[-L, L]` to the nearest grid point.
    pub max_gap: f64,
}

impl GridSpec {
    pub fn new(k: u64) -> Result<Self> {
        if k < 3 {
            return Err(Error::OutOfRange { what: "level", detail: format!("{k} < 3") });
        }
        let half_width = lnln(k as f64);
        let count = grid_count(k) as usize;
        let spacing = 2.0 * half_width / count as f64;
        let scale = GRID_DENOMINATOR as f64;
        let mut ticks = vec![0i64; count];
        for i in 0..count / 2 {
            let x = -half_width + spacing * (i as f64 + 0.5);
            ticks[i] = (x * scale).round() as i64;
            ticks[count - 1 - i] = -ticks[i];
        }
        let points: Vec<f64> = ticks.iter().map(|&t| t as f64 / scale).collect();
        let mut max_gap = (points[0] + half_width).max(half_width - points[count - 1]);
        for w in points.windows(2) {
            max_gap = max_gap.max((w[1] - w[0]) / 2.0);
        }
        debug_assert!(max_gap < 1.0 / k as f64 - 2f64.powi(-39));
        Ok(Self { k, half_width, ticks, max_gap })
    }

    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    pub fn point(&self, i: usize) -> f64 {
        self.ticks[i] as f64 / GRID_DENOMINATOR as f64
    }

    /// Density margin `1/k - max_gap`.
    pub fn slack(&self) -> f64 {
        1.0 / self.k as f64 - self.max_gap
    }

    /// Nearest grid index to `x` after clamping into `[-L, L]`, ties to the
    /// smaller value. Returns `(index, |x_clamped - point|, clamped)`.
    pub fn nearest(&self, x: f64) -> (usize, f64, bool) {
        let clamped = x.clamp(-self.half_width, self.half_width);
        let was_clamped = clamped != x;
        let above = self.ticks.partition_point(|&t| (t as f64 / GRID_DENOMINATOR as f64) < clamped);
        let best = if above == 0 {
            0
        } else if above == self.len() {
            self.len() - 1
        } else {
            let below_d = clamped - self.point(above - 1);
            let above_d = self.point(above) - clamped;
            if below_d <= above_d {
                above - 1
            } else {
                above
            }
        };
        (best, (clamped - self.point(best)).abs(), was_clamped)
    }
}

/// A prefix `(y_2, ..., y_{k-1})` in `D_k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TupleIndex {
    pub k: usize,
    pub p: usize,
    /// Flattened level by level, like [`FactorialDigits`].
    pub digits: Vec<u32>,
}

impl TupleIndex {
    pub fn from_prefix(prefix: &FactorialDigits, k: usize) -> Result<Self> {
        if prefix.depth() + 1 < k {
            return Err(Error::OutOfRange {
                what: "prefix depth",
                detail: format!("level {k} needs digits up to {}, have {}", k - 1, prefix.depth()),
            });
        }
        let digits = (2..k).flat_map(|n| prefix.level(n).iter().copied()).collect();
        Ok(Self { k, p: prefix.p(), digits })
    }

    /// Lexicographic rank inside `D_k`.
    pub fn rank(&self) -> u64 {
        let mut rank = 0u64;
        for (offset, level) in self.digits.chunks(self.p.max(1)).enumerate() {
            let n = offset as u64 + 2;
            for &d in level {
                rank = rank * n + u64::from(d);
            }
        }
        rank
    }

    pub fn unrank(k: usize, p: usize, mut rank: u64) -> Self {
        let mut digits = vec![0u32; (k.saturating_sub(2)) * p];
        for n in (2..k).rev() {
            for i in (0..p).rev() {
                digits[(n - 2) * p + i] = (rank % n as u64) as u32;
                rank /= n as u64;
            }
        }
        Self { k, p, digits }
    }

    /// The prefix as factorial digits (`None` for `k = 2`, the empty prefix).
    pub fn to_digits(&self) -> Option<FactorialDigits> {
        if self.k < 3 {
            return None;
        }
        let levels: Vec<Vec<u32>> = self.digits.chunks(self.p).map(<[u32]>::to_vec).collect();
        FactorialDigits::from_levels(self.p, &levels).ok()
    }
}

/// `|D_k| = (k-1)!^p`, if it fits in a `u64`.
pub fn tuple_count(k: usize, p: usize) -> Option<u64> {
    let mut f = 1u64;
    for i in 2..k as u64 {
        f = f.checked_mul(i)?;
    }
    f.checked_pow(u32::try_from(p).ok()?)
}

/// All of `D_k` in lexicographic order.
pub fn enumerate_d(k: usize, p: usize, caps: &MapCaps) -> Result<impl Iterator<Item = TupleIndex>> {
    if k < 3 {
        return Err(Error::OutOfRange { what: "level", detail: format!("{k} < 3") });
    }
    let size = tuple_count(k, p)
        .filter(|&s| s <= caps.tuple_cap)
        .ok_or_else(|| Error::BoundedMode(format!("|D_{k}| = ({}!)^{p} exceeds the enumeration cap", k - 1)))?;
    Ok((0..size).map(move |r| TupleIndex::unrank(k, p, r)))
}

/// A value of `m_k`, exact when small enough.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Count {
    Exact(#[serde(with = "natural_serde")] Natural),
    /// `ln m_k`.
    Log { ln: LogTower },
}

impl Count {
    pub fn ln(&self) -> LogTower {
        match self {
            Count::Exact(n) => LogTower::from_f64(ln_natural(n)),
            Count::Log { ln } => *ln,
        }
    }

    pub fn exact(&self) -> Option<&Natural> {
        match self {
            Count::Exact(n) => Some(n),
            Count::Log { .. } => None,
        }
    }
}

/// Identifies `s_j^k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseMapIndex {
    pub k: usize,
    #[serde(with = "natural_serde")]
    pub j: Natural,
}

/// Position `N` of a map in the sequence `(r_n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SequencePosition {
    Exact(#[serde(with = "natural_serde")] Natural),
    /// `ln N` lies in `[lo_ln, hi_ln]`.
    Bounded { lo_ln: LogTower, hi_ln: LogTower },
}

impl SequencePosition {
    pub fn exact(&self) -> Option<&Natural> {
        match self {
            SequencePosition::Exact(n) => Some(n),
            SequencePosition::Bounded { .. } => None,
        }
    }

    /// Lower end of `ln N`.
    pub fn ln_lo(&self) -> LogTower {
        match self {
            SequencePosition::Exact(n) => LogTower::from_f64(ln_natural(n)),
            SequencePosition::Bounded { lo_ln, .. } => *lo_ln,
        }
    }

    /// Upper end of `ln N`.
    pub fn ln_hi(&self) -> LogTower {
        match self {
            SequencePosition::Exact(n) => LogTower::from_f64(ln_natural(n)),
            SequencePosition::Bounded { hi_ln, .. } => *hi_ln,
        }
    }

    /// Lower end of `N` itself.
    pub fn lo(&self) -> LogTower {
        match self {
            SequencePosition::Exact(n) => n.to_f64().filter(|v| v.is_finite()).map_or_else(
                || LogTower::from_ln_f64(ln_natural(n)),
                LogTower::from_f64,
            ),
            SequencePosition::Bounded { lo_ln, .. } => lo_ln.exp(),
        }
    }

    /// Upper end of `N` itself.
    pub fn hi(&self) -> LogTower {
        match self {
            SequencePosition::Exact(_) => self.lo(),
            SequencePosition::Bounded { hi_ln, .. } => hi_ln.exp(),
        }
    }
}

/// What sits at a position of the sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Block {
    /// `r_2`, the all-ones matrix.
    Constant,
    Map(DenseMapIndex),
}

#[derive(Debug)]
struct Level {
    grid_count: u64,
    tuples: Option<u64>,
    exact: bool,
    count: Count,
    /// `3 + sum_{3 <= l < k} m_l`, when every earlier level is exact.
    start: Option<Natural>,
}

/// The dense map families and the sequence `(r_n)` for fixed `(p, q)`.
#[derive(Debug)]
pub struct DenseMaps {
    p: usize,
    q: usize,
    caps: MapCaps,
    levels: Vec<OnceLock<Level>>,
    grids: Vec<OnceLock<GridSpec>>,
}

/// Result of rounding a target map onto the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MapChoice {
    Exact {
        index: DenseMapIndex,
        /// Largest entrywise distance between target and chosen map over `D_k`.
        max_distance: f64,
        /// Some target entry was outside `[-lnln k, lnln k]`.
        clamped: bool,
    },
    /// Bounded mode: every `j` in `[1, m_k]` is possible.
    Interval { k: usize, m: Count },
}

impl DenseMaps {
    pub fn new(p: usize, q: usize) -> Self {
        Self::with_caps(p, q, MapCaps::default())
    }

    pub fn with_caps(p: usize, q: usize, caps: MapCaps) -> Self {
        assert!(p > 0 && q > 0);
        Self {
            p,
            q,
            caps,
            levels: (0..=MAX_CACHED_LEVEL).map(|_| OnceLock::new()).collect(),
            grids: (0..=MAX_CACHED_LEVEL).map(|_| OnceLock::new()).collect(),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn caps(&self) -> &MapCaps {
        &self.caps
    }

    fn entries(&self) -> u64 {
        (self.p * self.q) as u64
    }

    fn level(&self, k: usize) -> Option<&Level> {
        if !(3..=MAX_CACHED_LEVEL).contains(&k) {
            return None;
        }
        Some(self.levels[k].get_or_init(|| self.build_level(k)))
    }

    fn build_level(&self, k: usize) -> Level {
        let grid_count = grid_count(k as u64);
        let tuples = tuple_count(k, self.p);
        let digits = match tuples {
            Some(t) => self.entries() as f64 * t as f64 * (grid_count as f64).log10(),
            None => f64::INFINITY,
        };
        let exact = tuples.is_some_and(|t| t <= self.caps.tuple_cap) && digits <= self.caps.digit_cap as f64;
        let count = if grid_count == 1 {
            Count::Exact(Natural::one())
        } else if exact {
            let exponent = self.entries() * tuples.expect("exact level has a tuple count");
            Count::Exact(num_traits::pow(Natural::from(grid_count), exponent as usize))
        } else {
            Count::Log { ln: self.ln_m_formula(k, grid_count) }
        };
        let start = if k == 3 {
            Some(Natural::from(3u32))
        } else {
            let prev = self.level(k - 1).expect("cached");
            match (&prev.start, &prev.count) {
                (Some(s), Count::Exact(m)) => Some(s + m),
                _ => None,
            }
        };
        Level { grid_count, tuples, exact, count, start }
    }

    /// `ln m_k = pq (k-1)!^p ln G_k` through its logarithm.
    fn ln_m_formula(&self, k: usize, grid_count: u64) -> LogTower {
        if grid_count == 1 {
            return LogTower::ZERO;
        }
        let ln_ln_m = (self.entries() as f64).ln()
            + self.p as f64 * ln_factorial(k as u64 - 1)
            + (grid_count as f64).ln().ln();
        LogTower::from_ln_f64(ln_ln_m)
    }

    pub fn grid(&self, k: usize) -> Result<&GridSpec> {
        if !(3..=MAX_CACHED_LEVEL).contains(&k) {
            return Err(Error::BoundedMode(format!("grid points for level {k} are not materialized")));
        }
        if let Some(g) = self.grids[k].get() {
            return Ok(g);
        }
        let g = GridSpec::new(k as u64)?;
        Ok(self.grids[k].get_or_init(|| g))
    }

    /// Whether level `k` can be enumerated and indexed exactly.
    pub fn is_exact(&self, k: usize) -> bool {
        self.level(k).is_some_and(|l| l.exact)
    }

    /// `m_k`, exact while it has at most `digit_cap` digits.
    pub fn m_count(&self, k: usize) -> Result<Count> {
        if k < 3 {
            return Err(Error::OutOfRange { what: "level", detail: format!("{k} < 3") });
        }
        Ok(match self.level(k) {
            Some(l) => l.count.clone(),
            None => Count::Log { ln: self.ln_m_formula(k, grid_count(k as u64)) },
        })
    }

    pub fn tuple_count(&self, k: usize) -> Option<u64> {
        self.level(k).map_or_else(|| tuple_count(k, self.p), |l| l.tuples)
    }

    /// First position of block `k`, when exact.
    fn block_start(&self, k: usize) -> Option<&Natural> {
        self.level(k).and_then(|l| l.start.as_ref())
    }

    /// Position of `s_j^k` in the sequence.
    pub fn position_of(&self, k: usize, j: &Natural) -> Result<SequencePosition> {
        let m = self.m_count(k)?;
        if j.is_zero() || m.exact().is_some_and(|m| j > m) {
            return Err(Error::OutOfRange { what: "map index", detail: format!("j = {j} not in [1, m_{k}]") });
        }
        if let Some(start) = self.block_start(k) {
            return Ok(SequencePosition::Exact(start + j - 1u32));
        }
        Ok(self.block_interval(k))
    }

    /// Interval of positions covered by block `k`.
    pub fn block_interval(&self, k: usize) -> SequencePosition {
        let ln_m = self.m_count(k).map(|m| m.ln()).unwrap_or(LogTower::ZERO);
        let lo_ln = match self.block_start(k) {
            Some(start) => LogTower::from_f64(ln_natural(start)),
            // N > m_{k-1}, since the previous block precedes it
            None => self.m_count(k - 1).map(|m| m.ln()).unwrap_or(LogTower::ZERO),
        };
        // N <= 2 + k m_k, since m_l is nondecreasing
        let hi_ln = ln_m.add(&LogTower::from_f64(((k + 2) as f64).ln()));
        SequencePosition::Bounded { lo_ln, hi_ln }
    }

    /// Block and in-block index of an exact position.
    pub fn decode(&self, n: &Natural) -> Result<Block> {
        if *n < Natural::from(2u32) {
            return Err(Error::OutOfRange { what: "position", detail: format!("N = {n} < 2") });
        }
        if *n == Natural::from(2u32) {
            return Ok(Block::Constant);
        }
        for k in 3..=MAX_CACHED_LEVEL {
            let level = self.level(k).expect("cached level");
            let start = level.start.as_ref().ok_or_else(|| Error::Inaccessible { n: n.to_string() })?;
            match &level.count {
                Count::Exact(m) => {
                    if n < &(start + m) {
                        return Ok(Block::Map(DenseMapIndex { k, j: n - start + 1u32 }));
                    }
                }
                Count::Log { .. } => {
                    // The position lies inside this astronomically long block,
                    // but its maps are not indexable.
                    return Err(Error::Inaccessible { n: n.to_string() });
                }
            }
        }
        Err(Error::Inaccessible { n: n.to_string() })
    }

    /// Grid indices of `s_j^k` at the prefix with rank `rank`, row-major `q x p`.
    pub fn eval_map_indices(&self, idx: &DenseMapIndex, rank: u64) -> Result<Vec<u64>> {
        let level = self.level(idx.k).filter(|l| l.exact).ok_or_else(|| {
            Error::EvaluationUndefined(format!("level {} is outside the exact regime", idx.k))
        })?;
        let tuples = level.tuples.expect("exact level");
        if rank >= tuples {
            return Err(Error::OutOfRange { what: "tuple rank", detail: format!("{rank} >= {tuples}") });
        }
        let entries = self.entries() as usize;
        let g = level.grid_count;
        if g == 1 {
            return Ok(vec![0; entries]);
        }
        let offset = rank * entries as u64;
        let jm1 = &idx.j - 1u32;
        // G^offset > j - 1 means every digit from `offset` on is zero.
        if offset as f64 * (g as f64).log2() > jm1.bits() as f64 + 1.0 {
            return Ok(vec![0; entries]);
        }
        let base = Natural::from(g);
        let mut v = if offset == 0 {
            jm1
        } else {
            jm1 / num_traits::pow(base.clone(), offset as usize)
        };
        let mut out = Vec::with_capacity(entries);
        for _ in 0..entries {
            let (quot, rem) = v.div_rem(&base);
            out.push(rem.to_u64().expect("digit below G"));
            v = quot;
        }
        Ok(out)
    }

    /// `s_j^k` at one prefix, as grid ticks (numerators over `2^40`).
    pub fn eval_map_ticks(&self, idx: &DenseMapIndex, rank: u64) -> Result<Vec<i64>> {
        let grid = self.grid(idx.k)?;
        Ok(self.eval_map_indices(idx, rank)?.into_iter().map(|i| grid.ticks[i as usize]).collect())
    }

    /// `s_j^k(t)` as a `q x p` matrix.
    pub fn eval_map(&self, idx: &DenseMapIndex, t: &TupleIndex) -> Result<DMatrix<f64>> {
        if t.k != idx.k || t.p != self.p {
            return Err(Error::DimensionMismatch { expected: idx.k, got: t.k });
        }
        let ticks = self.eval_map_ticks(idx, t.rank())?;
        Ok(ticks_to_matrix(self.q, self.p, &ticks))
    }

    /// The map whose value at every prefix is the grid matrix nearest to `target`.
    pub fn nearest_map_index<F>(&self, k: usize, target: F, exec: Exec) -> Result<MapChoice>
    where
        F: Fn(&TupleIndex) -> Result<DMatrix<f64>> + Sync + Send,
    {
        if !self.is_exact(k) {
            return Ok(MapChoice::Interval { k, m: self.m_count(k)? });
        }
        let grid = self.grid(k)?;
        let tuples = self.tuple_count(k).expect("exact level");
        let (p, q) = (self.p, self.q);
        let rows = exec.map_range(tuples as usize, |rank| -> Result<(Vec<u8>, f64, bool)> {
            let t = TupleIndex::unrank(k, p, rank as u64);
            let m = target(&t)?;
            if m.nrows() != q || m.ncols() != p {
                return Err(Error::DimensionMismatch { expected: q * p, got: m.nrows() * m.ncols() });
            }
            let mut digits = Vec::with_capacity(p * q);
            let (mut worst, mut clamped) = (0.0f64, false);
            for r in 0..q {
                for c in 0..p {
                    let (i, d, cl) = grid.nearest(m[(r, c)]);
                    digits.push(u8::try_from(i).expect("grid index fits in a byte in the exact regime"));
                    worst = worst.max(d);
                    clamped |= cl;
                }
            }
            Ok((digits, worst, clamped))
        });
        let mut digits = Vec::with_capacity(tuples as usize * p * q);
        let (mut max_distance, mut clamped) = (0.0f64, false);
        for row in rows {
            let (d, w, c) = row?;
            digits.extend(d);
            max_distance = max_distance.max(w);
            clamped |= c;
        }
        let g = grid.len() as u32;
        let jm1 = if g == 1 {
            Natural::zero()
        } else {
            Natural::from_radix_le(&digits, g).expect("digits below radix")
        };
        Ok(MapChoice::Exact { index: DenseMapIndex { k, j: jm1 + 1u32 }, max_distance, clamped })
    }

    /// `r_N` at `prefix`, as ticks (row-major `q x p`).
    pub fn r_ticks(&self, n: &Natural, prefix: &FactorialDigits) -> Result<Vec<i64>> {
        match self.decode(n)? {
            Block::Constant => Ok(vec![GRID_DENOMINATOR; self.p * self.q]),
            Block::Map(idx) => {
                if prefix.depth() + 1 < idx.k {
                    return Err(Error::OutOfRange {
                        what: "prefix depth",
                        detail: format!("r_{n} needs digits up to y_{}", idx.k - 1),
                    });
                }
                self.eval_map_ticks(&idx, prefix.prefix_rank(idx.k))
            }
        }
    }

    /// `r_N(y_2, ..., y_{k-1})` as a `q x p` matrix.
    pub fn r_eval(&self, n: &SequencePosition, prefix: &FactorialDigits) -> Result<DMatrix<f64>> {
        let n = n
            .exact()
            .ok_or_else(|| Error::EvaluationUndefined("position is only known as an interval".into()))?;
        Ok(ticks_to_matrix(self.q, self.p, &self.r_ticks(n, prefix)?))
    }
}

pub fn ticks_to_matrix(rows: usize, cols: usize, ticks: &[i64]) -> DMatrix<f64> {
    DMatrix::from_row_iterator(rows, cols, ticks.iter().map(|&t| t as f64 / GRID_DENOMINATOR as f64))
}
