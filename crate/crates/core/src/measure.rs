//! Outer-measure estimates of slice images by counting cells of a dyadic grid.
//!
//! The image of the cylinder `{y : y_2..y_{N-1} fixed}` under
//! `y -> f(y, psi(y), t)` lies within
//! `rho = p ||J_y|| / (N-1)! + q ||J_omega|| p psi_tail(N)`
//! of `V = f(y^(N), psi^(N)(y), t)` in every coordinate. Each prefix thus
//! contributes a box of cells; the union of those boxes covers the slice
//! image whenever the prefix set is exhaustive.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::{tuple_count, DenseMaps, TupleIndex};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::factorial::FactorialDigits;
use crate::family::FamilySpec;
use crate::numeric::{ln_factorial, rational_to_f64};
use crate::psi::{psi_tail, psi_truncated};
use crate::slice::SliceCertificate;
use num_traits::ToPrimitive;

/// Prefixes `y_2..y_{N-1}` used for one truncation.
#[derive(Clone, Debug, PartialEq)]
pub struct PrefixSet {
    pub n: usize,
    pub prefixes: Vec<FactorialDigits>,
    pub exhaustive: bool,
}

/// All of `D_N` when it has at most `budget` elements, else `budget` seeded uniform draws.
pub fn prefix_set(p: usize, n: usize, budget: usize, seed: u64) -> Result<PrefixSet> {
    if n < 3 {
        return Err(Error::OutOfRange { what: "truncation", detail: format!("{n} < 3") });
    }
    match tuple_count(n, p).filter(|&c| c <= budget as u64) {
        Some(count) => Ok(PrefixSet {
            n,
            prefixes: (0..count).map(|r| TupleIndex::unrank(n, p, r).to_digits().expect("n >= 3")).collect(),
            exhaustive: true,
        }),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(PrefixSet {
                n,
                prefixes: (0..budget).map(|_| FactorialDigits::random(p, n - 1, &mut rng)).collect(),
                exhaustive: false,
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverEstimate {
    #[serde(rename = "N")]
    pub n: usize,
    pub delta: f64,
    pub y_samples: usize,
    pub exhaustive: bool,
    /// Enclosure radius per coordinate.
    pub radius: f64,
    /// Cells met by the union of cylinder enclosures.
    pub cells: u128,
    /// Distinct cells holding a value of `V`.
    pub point_cells: usize,
    /// `cells * delta^(n-d)`.
    pub measure_upper: f64,
}

/// Per-coordinate radius of the cylinder enclosure at truncation `n`.
pub fn enclosure_radius(spec: &FamilySpec, n: usize) -> f64 {
    let (p, q) = (spec.dims.p as f64, spec.dims.q as f64);
    let b = &spec.bounds;
    p * b.jy_sup * (-ln_factorial(n as u64 - 1)).exp() + q * b.jw_sup * p * psi_tail(n)
}

/// `V(y) = f(y^(N), psi^(N)(y), t)`.
pub fn v_value(spec: &FamilySpec, maps: &DenseMaps, y: &FactorialDigits, n: usize, t: &[f64]) -> Result<Vec<f64>> {
    let yn: Vec<f64> = y.value(n)?.iter().map(rational_to_f64).collect();
    let wn = psi_truncated(maps, y, n)?.value_f64();
    Ok(spec.eval(&yn, &wn, t).iter().copied().collect())
}

fn cell(x: f64, delta: f64) -> i64 {
    (x / delta).floor() as i64
}

/// Number of lattice cells in a union of boxes, each given as inclusive ranges per axis.
pub fn union_cell_count(boxes: &[Vec<(i64, i64)>]) -> u128 {
    let mut boxes: Vec<Vec<(i64, i64)>> = boxes.to_vec();
    boxes.sort_unstable();
    boxes.dedup();
    count_sorted(&boxes)
}

fn count_sorted(boxes: &[Vec<(i64, i64)>]) -> u128 {
    let Some(first) = boxes.first() else { return 0 };
    if first.len() == 1 {
        let mut ranges: Vec<(i64, i64)> = boxes.iter().map(|b| b[0]).collect();
        ranges.sort_unstable();
        let mut total = 0u128;
        let (mut lo, mut hi) = ranges[0];
        for &(a, b) in &ranges[1..] {
            if a > hi + 1 {
                total += (hi - lo + 1) as u128;
                (lo, hi) = (a, b);
            } else {
                hi = hi.max(b);
            }
        }
        return total + (hi - lo + 1) as u128;
    }
    // Sweep the first axis; between breakpoints the active set is fixed.
    let mut cuts: Vec<i64> = boxes.iter().flat_map(|b| [b[0].0, b[0].1 + 1]).collect();
    cuts.sort_unstable();
    cuts.dedup();
    let mut total = 0u128;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mut active: Vec<Vec<(i64, i64)>> =
            boxes.iter().filter(|bx| bx[0].0 <= a && bx[0].1 >= b - 1).map(|bx| bx[1..].to_vec()).collect();
        if active.is_empty() {
            continue;
        }
        active.sort_unstable();
        active.dedup();
        total += (b - a) as u128 * count_sorted(&active);
    }
    total
}

/// Cover of the slice image at `t` by `delta`-cells, from the cylinders over `prefixes`.
pub fn slice_image_cover(
    spec: &FamilySpec,
    maps: &DenseMaps,
    prefixes: &PrefixSet,
    t: &[f64],
    delta: f64,
    exec: Exec,
) -> Result<CoverEstimate> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Domain(format!("delta must be positive, got {delta}")));
    }
    let n = prefixes.n;
    let radius = enclosure_radius(spec, n);
    let values = exec.try_map(&prefixes.prefixes, |y| v_value(spec, maps, y, n, t))?;
    let mut boxes = Vec::with_capacity(values.len());
    let mut points = BTreeSet::new();
    for v in &values {
        // rounding of V itself, well below any useful delta
        boxes.push(
            v.iter()
                .map(|&x| {
                    let r = radius + 1e-14 * (1.0 + x.abs());
                    (cell(x - r, delta), cell(x + r, delta))
                })
                .collect::<Vec<_>>(),
        );
        points.insert(v.iter().map(|&x| cell(x, delta)).collect::<Vec<_>>());
    }
    let cells = union_cell_count(&boxes);
    Ok(CoverEstimate {
        n,
        delta,
        y_samples: values.len(),
        exhaustive: prefixes.exhaustive,
        radius,
        cells,
        point_cells: points.len(),
        measure_upper: cells as f64 * delta.powi(spec.dims.m() as i32),
    })
}

/// Mean slice estimate over `t_samples`, times the volume of the t-box.
pub fn union_measure_estimate(
    spec: &FamilySpec,
    maps: &DenseMaps,
    prefixes: &PrefixSet,
    delta: f64,
    t_samples: &[Vec<f64>],
    exec: Exec,
) -> Result<f64> {
    let volume = spec.t_volume();
    if volume == 0.0 {
        return Ok(0.0);
    }
    if t_samples.is_empty() {
        return Err(Error::Domain("no t samples".into()));
    }
    let mut sum = 0.0;
    for t in t_samples {
        sum += slice_image_cover(spec, maps, prefixes, t, delta, exec)?.measure_upper;
    }
    Ok(sum / t_samples.len() as f64 * volume)
}

/// `g` equally spaced points per axis of the t-box (midpoint for `g = 1`).
pub fn t_grid(spec: &FamilySpec, g: usize) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = spec
        .t_box
        .iter()
        .map(|&(a, b)| {
            if g <= 1 {
                vec![(a + b) / 2.0]
            } else {
                (0..g).map(|i| a + (b - a) * i as f64 / (g - 1) as f64).collect()
            }
        })
        .collect();
    let total: usize = axes.iter().map(Vec::len).product();
    (0..total)
        .map(|mut code| {
            axes.iter()
                .map(|axis| {
                    let v = axis[code % axis.len()];
                    code /= axis.len();
                    v
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub delta: f64,
    pub y_samples: usize,
    pub t_samples: usize,
    pub cells: u128,
    pub measure_upper: f64,
    /// `measure_bound_log` of a covering certificate at this `N`, if one was attached.
    pub cert_log_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub family: String,
    pub seed: u64,
    pub rows: Vec<DecayRow>,
}

pub const DECAY_CSV_HEADER: &str = "N,delta,y_samples,t_samples,cells,measure_upper,cert_log_bound";

impl DecayReport {
    /// Fills `cert_log_bound` on the rows whose `N` is the certificate's exact position.
    pub fn attach_certificate(&mut self, cert: &SliceCertificate) {
        let Some(n) = cert.position.exact().and_then(|n| n.to_usize()) else { return };
        let bound = cert.measure_bound_log.to_f64();
        for row in self.rows.iter_mut().filter(|r| r.n == n) {
            row.cert_log_bound = Some(bound);
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(DECAY_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let cert = r.cert_log_bound.map(|c| c.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.n, r.delta, r.y_samples, r.t_samples, r.cells, r.measure_upper, cert
            ));
        }
        out
    }
}

/// One row per truncation; the same `seed` always yields the same rows.
#[allow(clippy::too_many_arguments)]
pub fn decay_report(
    spec: &FamilySpec,
    maps: &DenseMaps,
    truncations: &[usize],
    delta: f64,
    budget: usize,
    seed: u64,
    t_samples: &[Vec<f64>],
    exec: Exec,
) -> Result<DecayReport> {
    let mut rows = Vec::with_capacity(truncations.len());
    for &n in truncations {
        let prefixes = prefix_set(spec.dims.p, n, budget, seed)?;
        let (cells, measure_upper) = if t_samples.len() == 1 {
            let c = slice_image_cover(spec, maps, &prefixes, &t_samples[0], delta, exec)?;
            (c.cells, c.measure_upper)
        } else {
            let mut cells = 0u128;
            for t in t_samples {
                cells += slice_image_cover(spec, maps, &prefixes, t, delta, exec)?.cells;
            }
            (cells, union_measure_estimate(spec, maps, &prefixes, delta, t_samples, exec)?)
        };
        rows.push(DecayRow {
            n,
            delta,
            y_samples: prefixes.prefixes.len(),
            t_samples: t_samples.len(),
            cells,
            measure_upper,
            cert_log_bound: None,
        });
    }
    Ok(DecayReport { family: spec.name.clone(), seed, rows })
}
