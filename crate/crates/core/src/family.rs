//! Families `f(y, omega, t)` of surfaces with Jacobian data and declared bounds.
//!
//! Matrix norms are the largest absolute entry throughout.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorial::FactorialDigits;
use crate::numeric::rational_to_f64;
use crate::psi::{psi_bound, psi_truncated};
use crate::dense::DenseMaps;

pub type VectorFn = Arc<dyn Fn(&[f64], &[f64], &[f64]) -> DVector<f64> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&[f64], &[f64], &[f64]) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub d: usize,
    pub p: usize,
    pub q: usize,
}

impl Dims {
    /// Codimension `n - d`, the length of `f`.
    pub fn m(&self) -> usize {
        self.n - self.d
    }
}

/// `||J_y(a) - J_y(b)|| <= y_coef |a_y - b_y| + w_coef |a_w - b_w|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Modulus {
    pub y_coef: f64,
    pub w_coef: f64,
}

impl Modulus {
    pub fn at(&self, dy: f64, dw: f64) -> f64 {
        self.y_coef * dy + self.w_coef * dw
    }
}

/// Declared analytic bounds over the domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyBounds {
    pub jy_sup: f64,
    pub jw_sup: f64,
    /// Lipschitz constant of `J_omega` in the max norm of `(y, omega)`.
    pub jw_lipschitz: f64,
    pub jy_modulus: Modulus,
    /// Sup of `||J_omega^+ J_y||`.
    pub pinv_sup: f64,
}

#[derive(Clone)]
pub struct FamilySpec {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub dims: Dims,
    pub f: VectorFn,
    pub jy: MatrixFn,
    pub jw: MatrixFn,
    pub bounds: FamilyBounds,
    /// Closed box for `t`, one interval per dimension.
    pub t_box: Vec<(f64, f64)>,
}

impl fmt::Debug for FamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FamilySpec")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("dims", &self.dims)
            .field("bounds", &self.bounds)
            .field("t_box", &self.t_box)
            .finish_non_exhaustive()
    }
}

pub fn max_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, &x| a.max(x.abs()))
}

/// Minimal-norm right inverse `M^T (M M^T)^{-1}` of a full-row-rank matrix.
pub fn right_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sigma_min = smallest_singular_value(m);
    if m.nrows() > m.ncols() || sigma_min <= 1e-9 {
        return Err(Error::RankDeficient { sigma_min });
    }
    let gram = m * m.transpose();
    let inv = gram.try_inverse().ok_or(Error::RankDeficient { sigma_min })?;
    Ok(m.transpose() * inv)
}

/// Smallest of the `min(rows, cols)` singular values.
pub fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.iter().fold(f64::INFINITY, |a, &s| a.min(s))
}

impl FamilySpec {
    pub fn eval(&self, y: &[f64], w: &[f64], t: &[f64]) -> DVector<f64> {
        (self.f)(y, w, t)
    }

    pub fn jacobian_y(&self, y: &[f64], w: &[f64], t: &[f64]) -> DMatrix<f64> {
        (self.jy)(y, w, t)
    }

    pub fn jacobian_w(&self, y: &[f64], w: &[f64], t: &[f64]) -> DMatrix<f64> {
        (self.jw)(y, w, t)
    }

    /// Radius of the `omega` ball containing `psi((0, 1]^p)`.
    pub fn omega_radius(&self) -> f64 {
        psi_bound(self.dims.p)
    }

    pub fn t_volume(&self) -> f64 {
        self.t_box.iter().map(|(a, b)| (b - a).max(0.0)).product()
    }

    /// `-J_omega^+ J_y` at `(y, omega, t)`.
    pub fn target_at(&self, y: &[f64], w: &[f64], t: &[f64]) -> Result<DMatrix<f64>> {
        let jw = self.jacobian_w(y, w, t);
        Ok(-(right_inverse(&jw)? * self.jacobian_y(y, w, t)))
    }

    fn check_dims(&self) -> Result<()> {
        let Dims { n, d, p, q } = self.dims;
        if d >= n {
            return Err(Error::InvalidFamily(format!("d < n violated (d = {d}, n = {n})")));
        }
        if p > n - d {
            return Err(Error::InvalidFamily(format!("p ≤ n−d violated (p = {p}, n−d = {})", n - d)));
        }
        if n - d > q {
            return Err(Error::InvalidFamily(format!("n−d ≤ q violated (n−d = {}, q = {q})", n - d)));
        }
        if self.t_box.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: self.t_box.len() });
        }
        Ok(())
    }
}

/// `-J_omega^+ J_y` at `(y^(k), psi^(k)(y), t)`.
pub fn target_matrix(spec: &FamilySpec, maps: &DenseMaps, y: &FactorialDigits, k: usize, t: &[f64]) -> Result<DMatrix<f64>> {
    let yk: Vec<f64> = y.value(k)?.iter().map(rational_to_f64).collect();
    let wk = psi_truncated(maps, y, k)?.value_f64();
    spec.target_at(&yk, &wk, t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FailureKind {
    Dimensions,
    RankDeficient,
    JacobianMismatch,
    BoundExceeded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationFailure {
    pub kind: FailureKind,
    pub detail: String,
    /// `(y, omega, t)` concatenated; empty for dimension failures.
    pub point: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub family: String,
    pub points: usize,
    pub min_singular_value: f64,
    pub failures: Vec<ValidationFailure>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

const FD_STEP: f64 = 1e-6;
const FD_TOLERANCE: f64 = 1e-4;
const GRID_POINTS: usize = 5;
const MAX_REPORTED: usize = 20;

fn grid_axis(lo: f64, hi: f64) -> Vec<f64> {
    (0..GRID_POINTS).map(|i| lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64).collect()
}

/// Central differences of `f` in one block of coordinates.
fn finite_difference(spec: &FamilySpec, y: &[f64], w: &[f64], t: &[f64], wrt_y: bool) -> DMatrix<f64> {
    let cols = if wrt_y { y.len() } else { w.len() };
    let mut out = DMatrix::zeros(spec.dims.m(), cols);
    for c in 0..cols {
        let (mut ya, mut yb, mut wa, mut wb) = (y.to_vec(), y.to_vec(), w.to_vec(), w.to_vec());
        if wrt_y {
            ya[c] += FD_STEP;
            yb[c] -= FD_STEP;
        } else {
            wa[c] += FD_STEP;
            wb[c] -= FD_STEP;
        }
        let diff = (spec.eval(&ya, &wa, t) - spec.eval(&yb, &wb, t)) / (2.0 * FD_STEP);
        out.set_column(c, &diff);
    }
    out
}

fn jacobians_agree(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>) -> bool {
    analytic.shape() == numeric.shape()
        && analytic.iter().zip(numeric.iter()).all(|(a, n)| (a - n).abs() <= FD_TOLERANCE * a.abs().max(1.0))
}

/// Checks one domain point; pushes failures.
pub fn check_point(spec: &FamilySpec, y: &[f64], w: &[f64], t: &[f64], failures: &mut Vec<ValidationFailure>) -> f64 {
    let point: Vec<f64> = y.iter().chain(w).chain(t).copied().collect();
    let jy = spec.jacobian_y(y, w, t);
    let jw = spec.jacobian_w(y, w, t);
    let sigma = smallest_singular_value(&jw);
    let mut fail = |kind, detail: String| failures.push(ValidationFailure { kind, detail, point: point.clone() });
    if sigma <= 1e-9 || jw.shape() != (spec.dims.m(), spec.dims.q) {
        fail(FailureKind::RankDeficient, format!("rank(J_ω) < {} (σ_min = {sigma:e})", spec.dims.m()));
        return sigma;
    }
    if !jacobians_agree(&jy, &finite_difference(spec, y, w, t, true)) {
        fail(FailureKind::JacobianMismatch, "J_y disagrees with finite differences".into());
    }
    if !jacobians_agree(&jw, &finite_difference(spec, y, w, t, false)) {
        fail(FailureKind::JacobianMismatch, "J_ω disagrees with finite differences".into());
    }
    let b = &spec.bounds;
    let slack = 1.0 + 1e-12;
    if max_norm(&jy) > b.jy_sup * slack {
        fail(FailureKind::BoundExceeded, format!("‖J_y‖ = {} > declared {}", max_norm(&jy), b.jy_sup));
    }
    if max_norm(&jw) > b.jw_sup * slack {
        fail(FailureKind::BoundExceeded, format!("‖J_ω‖ = {} > declared {}", max_norm(&jw), b.jw_sup));
    }
    if let Ok(target) = spec.target_at(y, w, t) {
        if max_norm(&target) > b.pinv_sup * slack {
            fail(FailureKind::BoundExceeded, format!("‖J_ω⁺J_y‖ = {} > declared {}", max_norm(&target), b.pinv_sup));
        }
    }
    sigma
}

/// Dimension checks plus a `5^(p+q+d)` grid over `(0,1]^p x [-R,R]^q x t_box`.
pub fn validate(spec: &FamilySpec) -> ValidationReport {
    let mut report = ValidationReport {
        family: spec.name.clone(),
        points: 0,
        min_singular_value: f64::INFINITY,
        failures: Vec::new(),
    };
    if let Err(e) = spec.check_dims() {
        report.failures.push(ValidationFailure { kind: FailureKind::Dimensions, detail: e.to_string(), point: vec![] });
        return report;
    }
    let Dims { p, q, d, .. } = spec.dims;
    let radius = spec.omega_radius();
    let mut axes: Vec<Vec<f64>> = Vec::new();
    // y lives in (0, 1]: keep the grid off the open end
    axes.extend((0..p).map(|_| grid_axis(0.05, 1.0)));
    axes.extend((0..q).map(|_| grid_axis(-radius, radius)));
    axes.extend(spec.t_box.iter().map(|&(a, b)| grid_axis(a, b)));
    let total = GRID_POINTS.pow((p + q + d) as u32);
    let mut failures = Vec::new();
    for code in 0..total {
        let mut c = code;
        let coords: Vec<f64> = axes
            .iter()
            .map(|axis| {
                let v = axis[c % GRID_POINTS];
                c /= GRID_POINTS;
                v
            })
            .collect();
        let sigma = check_point(spec, &coords[..p], &coords[p..p + q], &coords[p + q..], &mut failures);
        report.min_singular_value = report.min_singular_value.min(sigma);
        report.points += 1;
    }
    failures.truncate(MAX_REPORTED);
    report.failures = failures;
    report
}

fn t_max(t_box: &[(f64, f64)]) -> f64 {
    t_box.iter().fold(0.0, |m, &(a, b)| m.max(a.abs()).max(b.abs()))
}

fn unit_box() -> Vec<(f64, f64)> {
    vec![(0.0, 1.0)]
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

/// `f = lambda y t - omega`.
pub fn sawyer_line(lambda: f64) -> FamilySpec {
    sawyer_line_on(lambda, unit_box())
}

pub fn sawyer_line_on(lambda: f64, t_box: Vec<(f64, f64)>) -> FamilySpec {
    let tm = t_max(&t_box);
    FamilySpec {
        name: "sawyer_line".into(),
        params: params(&[("lambda", lambda)]),
        dims: Dims { n: 2, d: 1, p: 1, q: 1 },
        f: Arc::new(move |y, w, t| DVector::from_element(1, lambda * y[0] * t[0] - w[0])),
        jy: Arc::new(move |_, _, t| DMatrix::from_element(1, 1, lambda * t[0])),
        jw: Arc::new(|_, _, _| DMatrix::from_element(1, 1, -1.0)),
        bounds: FamilyBounds {
            jy_sup: lambda.abs() * tm,
            jw_sup: 1.0,
            jw_lipschitz: 0.0,
            jy_modulus: Modulus { y_coef: 0.0, w_coef: 0.0 },
            pinv_sup: lambda.abs() * tm,
        },
        t_box,
    }
}

/// `f = lambda y t^2 - omega`.
pub fn sawyer_parabola(lambda: f64) -> FamilySpec {
    sawyer_parabola_on(lambda, unit_box())
}

pub fn sawyer_parabola_on(lambda: f64, t_box: Vec<(f64, f64)>) -> FamilySpec {
    let tm = t_max(&t_box);
    FamilySpec {
        name: "sawyer_parabola".into(),
        params: params(&[("lambda", lambda)]),
        dims: Dims { n: 2, d: 1, p: 1, q: 1 },
        f: Arc::new(move |y, w, t| DVector::from_element(1, lambda * y[0] * t[0] * t[0] - w[0])),
        jy: Arc::new(move |_, _, t| DMatrix::from_element(1, 1, lambda * t[0] * t[0])),
        jw: Arc::new(|_, _, _| DMatrix::from_element(1, 1, -1.0)),
        bounds: FamilyBounds {
            jy_sup: lambda.abs() * tm * tm,
            jw_sup: 1.0,
            jw_lipschitz: 0.0,
            jy_modulus: Modulus { y_coef: 0.0, w_coef: 0.0 },
            pinv_sup: lambda.abs() * tm * tm,
        },
        t_box,
    }
}

/// `f = (lambda y t - omega_1, lambda y t^2 - omega_2)`.
pub fn twist_pair(lambda: f64) -> FamilySpec {
    twist_pair_on(lambda, unit_box())
}

pub fn twist_pair_on(lambda: f64, t_box: Vec<(f64, f64)>) -> FamilySpec {
    let tm = t_max(&t_box);
    let jy_sup = lambda.abs() * tm.max(tm * tm);
    FamilySpec {
        name: "twist_pair".into(),
        params: params(&[("lambda", lambda)]),
        dims: Dims { n: 3, d: 1, p: 1, q: 2 },
        f: Arc::new(move |y, w, t| {
            DVector::from_vec(vec![lambda * y[0] * t[0] - w[0], lambda * y[0] * t[0] * t[0] - w[1]])
        }),
        jy: Arc::new(move |_, _, t| DMatrix::from_vec(2, 1, vec![lambda * t[0], lambda * t[0] * t[0]])),
        jw: Arc::new(|_, _, _| -DMatrix::identity(2, 2)),
        bounds: FamilyBounds {
            jy_sup,
            jw_sup: 1.0,
            jw_lipschitz: 0.0,
            jy_modulus: Modulus { y_coef: 0.0, w_coef: 0.0 },
            pinv_sup: jy_sup,
        },
        t_box,
    }
}

/// `f = lambda t y + (mu/2) t y^2 - omega - (mu/2) omega^2`, curved in both `y` and `omega`.
pub fn bent_line(lambda: f64, mu: f64) -> Result<FamilySpec> {
    bent_line_on(lambda, mu, unit_box())
}

pub fn bent_line_on(lambda: f64, mu: f64, t_box: Vec<(f64, f64)>) -> Result<FamilySpec> {
    let tm = t_max(&t_box);
    let radius = psi_bound(1);
    if mu.abs() * radius >= 1.0 {
        return Err(Error::InvalidFamily(format!("|mu| = {mu} lets J_ω vanish on the ω ball")));
    }
    let jy_sup = tm * (lambda.abs() + mu.abs());
    Ok(FamilySpec {
        name: "bent_line".into(),
        params: params(&[("lambda", lambda), ("mu", mu)]),
        dims: Dims { n: 2, d: 1, p: 1, q: 1 },
        f: Arc::new(move |y, w, t| {
            let (y, w, t) = (y[0], w[0], t[0]);
            DVector::from_element(1, lambda * t * y + 0.5 * mu * t * y * y - w - 0.5 * mu * w * w)
        }),
        jy: Arc::new(move |y, _, t| DMatrix::from_element(1, 1, t[0] * (lambda + mu * y[0]))),
        jw: Arc::new(move |_, w, _| DMatrix::from_element(1, 1, -(1.0 + mu * w[0]))),
        bounds: FamilyBounds {
            jy_sup,
            jw_sup: 1.0 + mu.abs() * radius,
            jw_lipschitz: mu.abs(),
            jy_modulus: Modulus { y_coef: mu.abs() * tm, w_coef: 0.0 },
            pinv_sup: jy_sup / (1.0 - mu.abs() * radius),
        },
        t_box,
    })
}

pub const DEMO_NAMES: [&str; 4] = ["sawyer_line", "sawyer_parabola", "twist_pair", "bent_line"];

/// Demo family by name on `t_box` (default `[0, 1]`); `mu` only applies to `bent_line`.
pub fn demo(name: &str, lambda: f64, mu: Option<f64>, t_box: Option<Vec<(f64, f64)>>) -> Result<FamilySpec> {
    if !lambda.is_finite() {
        return Err(Error::InvalidFamily(format!("lambda = {lambda}")));
    }
    let t_box = t_box.unwrap_or_else(unit_box);
    if t_box.len() != 1 || t_box.iter().any(|&(a, b)| !a.is_finite() || !b.is_finite() || a > b) {
        return Err(Error::InvalidFamily(format!("demo families need one finite t interval, got {t_box:?}")));
    }
    match name {
        "sawyer_line" => Ok(sawyer_line_on(lambda, t_box)),
        "sawyer_parabola" => Ok(sawyer_parabola_on(lambda, t_box)),
        "twist_pair" => Ok(twist_pair_on(lambda, t_box)),
        "bent_line" => bent_line_on(lambda, mu.unwrap_or(0.03), t_box),
        other => Err(Error::InvalidFamily(format!("unknown family {other:?}; known: {}", DEMO_NAMES.join(", ")))),
    }
}
