//! One slice `t = const`: choose the level `k`, the map `s_j^k` and its
//! position `N`, split `f(y, psi(y))` into the five terms
//!
//! ```text
//! I   = f(Y, Psi)   - f(Y_N, Psi)   - A (Y - Y_N)
//! II  = f(Y_N, Psi) - f(Y_N, Psi_N) - B (Psi - Psi_N)
//! III = [A + B r_N] y_N / N!
//! IV  = sum_{n > N} [A + B r_n] y_n / n!
//! V   = f(Y_N, Psi_N)
//! ```
//!
//! with `A = J_y`, `B = J_omega` at `(y^(k), psi^(k)(y))`, bound each of
//! I..IV by `C' eps / (N-1)!` and turn that into a covering of the slice image.
//!
//! Norms are largest-entry norms, so every matrix-vector product picks up the
//! inner dimension as a factor; the bounds below carry those factors.

use nalgebra::DMatrix;
use num_traits::{One, ToPrimitive};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::{DenseMaps, MapChoice, SequencePosition, TupleIndex, ticks_to_matrix};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::factorial::FactorialDigits;
use crate::family::{Dims, FamilySpec};
use crate::numeric::{
    ln_factorial, ln_factorial_tower, ln_natural, lnln, rational_to_f64, LogMagnitude, LogTower, Natural, Rational,
};
use crate::psi::{ln_psi_tail, partial_sums, psi_tail_constant};

/// Search limit of the linear scan in [`select_k`].
pub const LINEAR_SCAN_LIMIT: u64 = 10_000_000;
/// Largest level [`select_k`] will consider.
pub const LEVEL_LIMIT: u64 = 1_000_000_000_000_000_000;

/// One of the five level conditions, `lhs < rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub index: u8,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub description: String,
}

/// Radii `(1/(k-1)!, p C lnln k/(k-1)!)` around `(y^(k), psi^(k))`.
pub fn condition_radii(p: usize, k: u64) -> (f64, f64) {
    let dy = (-ln_factorial(k - 1)).exp();
    (dy, p as f64 * psi_tail_constant() * lnln(k as f64) * dy)
}

/// The five conditions at level `k`. `||J_omega|| < lnln k` is not required.
pub fn conditions(spec: &FamilySpec, eps: f64, k: u64) -> [ConditionCheck; 5] {
    let b = &spec.bounds;
    let kf = k as f64;
    let ll = lnln(kf);
    let (dy, dw) = condition_radii(spec.dims.p, k);
    let check = |index, lhs: f64, rhs: f64, description: &str| ConditionCheck {
        index,
        lhs,
        rhs,
        holds: lhs < rhs,
        description: description.to_string(),
    };
    [
        check(1, b.jy_modulus.at(dy, dw), eps, "J_y modulus over the level-k radii < eps"),
        check(2, b.jw_lipschitz * dy.max(dw), eps / (kf * kf.ln()), "J_ω variation over the level-k radii < eps/(k ln k)"),
        check(3, b.jy_sup, ll, "‖J_y‖ < lnln k"),
        check(4, b.pinv_sup, ll, "‖J_ω⁺ J_y‖ < lnln k"),
        check(5, ll * ll / kf, eps, "(lnln k)^2 / k < eps"),
    ]
}

fn admissible(spec: &FamilySpec, eps: f64, k: u64) -> bool {
    conditions(spec, eps, k).iter().all(|c| c.holds)
}

/// Smallest `k >= 3` meeting all five conditions.
pub fn select_k(spec: &FamilySpec, eps: f64) -> Result<u64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    if let Some(k) = (3..=LINEAR_SCAN_LIMIT).find(|&k| admissible(spec, eps, k)) {
        return Ok(k);
    }
    if !admissible(spec, eps, LEVEL_LIMIT) {
        let binding = conditions(spec, eps, LEVEL_LIMIT).into_iter().find(|c| !c.holds).expect("a failing condition");
        return Err(Error::NoAdmissibleLevel {
            condition: binding.index,
            limit: LEVEL_LIMIT.to_string(),
            detail: format!("{}: {} ≥ {}", binding.description, binding.lhs, binding.rhs),
        });
    }
    // Past the scan every condition is monotone in k.
    let (mut lo, mut hi) = (LINEAR_SCAN_LIMIT, LEVEL_LIMIT);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if admissible(spec, eps, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexChoice {
    pub map: MapChoice,
    #[serde(rename = "N")]
    pub position: SequencePosition,
}

fn check_maps(spec: &FamilySpec, maps: &DenseMaps) -> Result<()> {
    if maps.p() != spec.dims.p || maps.q() != spec.dims.q {
        return Err(Error::DimensionMismatch { expected: spec.dims.p * spec.dims.q, got: maps.p() * maps.q() });
    }
    Ok(())
}

/// `j` rounding `-J_omega^+ J_y` at every prefix of `D_k`, and its position `N`.
///
/// The map depends on the prefix only, so one `j` serves every `y`.
pub fn choose_index(spec: &FamilySpec, maps: &DenseMaps, k: usize, t: &[f64], exec: Exec) -> Result<IndexChoice> {
    check_maps(spec, maps)?;
    let target = |tuple: &TupleIndex| -> Result<DMatrix<f64>> {
        let prefix = tuple.to_digits().expect("k >= 3");
        crate::family::target_matrix(spec, maps, &prefix, k, t)
    };
    let map = maps.nearest_map_index(k, target, exec)?;
    let position = match &map {
        MapChoice::Exact { index, .. } => maps.position_of(k, &index.j)?,
        MapChoice::Interval { .. } => maps.block_interval(k),
    };
    Ok(IndexChoice { map, position })
}

/// Five-point Gauss-Legendre rule on `[0, 1]`.
const GAUSS_NODES: [(f64, f64); 5] = [
    (0.046_910_077_030_668_004, 0.118_463_442_528_094_54),
    (0.230_765_344_947_158_45, 0.239_314_335_249_683_23),
    (0.5, 0.284_444_444_444_444_45),
    (0.769_234_655_052_841_6, 0.239_314_335_249_683_23),
    (0.953_089_922_969_332, 0.118_463_442_528_094_54),
];

fn segment_average<F>(from: &[f64], to: &[f64], jac: F) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> DMatrix<f64>,
{
    let mut acc: Option<DMatrix<f64>> = None;
    for &(s, w) in &GAUSS_NODES {
        let x: Vec<f64> = from.iter().zip(to).map(|(a, b)| a + s * (b - a)).collect();
        let m = jac(&x) * w;
        acc = Some(match acc {
            Some(a) => a + m,
            None => m,
        });
    }
    acc.expect("nodes")
}

fn mat_vec_log(m: &DMatrix<f64>, v: &[LogMagnitude]) -> Vec<LogMagnitude> {
    (0..m.nrows())
        .map(|i| LogMagnitude::sum((0..m.ncols()).map(|j| LogMagnitude::from_f64(m[(i, j)]) * v[j])))
        .collect()
}

fn difference_log(a: &[Rational], b: &[Rational]) -> Vec<LogMagnitude> {
    a.iter().zip(b).map(|(x, y)| LogMagnitude::from_rational(&(x - y))).collect()
}

fn to_f64s(v: &[Rational]) -> Vec<f64> {
    v.iter().map(rational_to_f64).collect()
}

/// `max_i |v_i|`.
pub fn max_abs(v: &[LogMagnitude]) -> LogMagnitude {
    v.iter().map(|x| x.abs()).fold(LogMagnitude::ZERO, |a, b| if b.cmp_abs(&a).is_gt() { b } else { a })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    /// Truncation depth `T` replacing `y` and `psi(y)`.
    pub depth: usize,
    /// `I..V`, each an `(n-d)`-vector.
    pub terms: [Vec<LogMagnitude>; 5],
    /// `ln` of a bound on how far each term moves when `T -> infinity`.
    pub tail_ln: [f64; 5],
    /// `f(y^(T), psi^(T)(y), t)`.
    pub total: Vec<f64>,
    /// `max |I + ... + V - total|`.
    pub residual: f64,
}

impl Decomposition {
    pub fn term_norm(&self, i: usize) -> LogMagnitude {
        max_abs(&self.terms[i])
    }
}

/// Splits `f(y^(T), psi^(T)(y), t)` into the five terms.
#[allow(clippy::too_many_arguments)]
pub fn decompose(
    spec: &FamilySpec,
    maps: &DenseMaps,
    y: &FactorialDigits,
    t: &[f64],
    k: usize,
    n: usize,
    depth: usize,
) -> Result<Decomposition> {
    check_maps(spec, maps)?;
    if !(3 <= k && k <= n && n <= depth) {
        return Err(Error::OutOfRange { what: "decomposition levels", detail: format!("need 3 <= k={k} <= N={n} <= T={depth}") });
    }
    let Dims { p, q, .. } = spec.dims;
    let stops = [k, n, depth];
    let psi = partial_sums(maps, y, &stops)?;
    let ys = y.values_at(&stops)?;
    let (yk, yn, yt) = (to_f64s(&ys[0]), to_f64s(&ys[1]), to_f64s(&ys[2]));
    let (wk, wn, wt) = (psi[0].value_f64(), psi[1].value_f64(), psi[2].value_f64());

    let a = spec.jacobian_y(&yk, &wk, t);
    let b = spec.jacobian_w(&yk, &wk, t);
    let dy = difference_log(&ys[2], &ys[1]);
    let dw = difference_log(&psi[2].value, &psi[1].value);

    let jy_avg = segment_average(&yn, &yt, |x| spec.jacobian_y(x, &wt, t));
    let jw_avg = segment_average(&wn, &wt, |x| spec.jacobian_w(&yn, x, t));
    let term_i = mat_vec_log(&(jy_avg - &a), &dy);
    let term_ii = mat_vec_log(&(jw_avg - &b), &dw);

    let bracket_term = |m: usize| -> Result<Vec<LogMagnitude>> {
        let r = ticks_to_matrix(q, p, &maps.r_ticks(&Natural::from(m), y)?);
        let bracket = &a + &b * r;
        let scale = LogMagnitude::from_ln(-ln_factorial(m as u64));
        let digits: Vec<LogMagnitude> = y.level(m).iter().map(|&d| LogMagnitude::from_f64(f64::from(d)) * scale).collect();
        Ok(mat_vec_log(&bracket, &digits))
    };
    let term_iii = bracket_term(n)?;
    let mut term_iv = vec![LogMagnitude::ZERO; spec.dims.m()];
    for m in n + 1..depth {
        for (acc, x) in term_iv.iter_mut().zip(bracket_term(m)?) {
            *acc = *acc + x;
        }
    }
    let term_v: Vec<LogMagnitude> = spec.eval(&yn, &wn, t).iter().map(|&x| LogMagnitude::from_f64(x)).collect();
    let total: Vec<f64> = spec.eval(&yt, &wt, t).iter().copied().collect();

    let terms = [term_i, term_ii, term_iii, term_iv, term_v];
    let residual = (0..spec.dims.m())
        .map(|c| (terms.iter().map(|v| v[c].to_f64()).sum::<f64>() - total[c]).abs())
        .fold(0.0, f64::max);

    let bd = &spec.bounds;
    let (pf, qf) = (p as f64, q as f64);
    let ln_y_tail = -ln_factorial(depth as u64 - 1);
    let ln_w_tail = pf.ln() + ln_psi_tail(depth as u64);
    let exp = |x: f64| LogMagnitude::from_ln(x);
    let ln_of = |x: LogMagnitude| x.ln_abs_or_neg_inf();
    // I: (J^ - A) moves through the y tail, J^ itself through both tails.
    let tail_i = exp(pf.ln() + (2.0 * bd.jy_sup).ln() + ln_y_tail)
        + exp(pf.ln() - ln_factorial(n as u64 - 1))
            * (LogMagnitude::from_f64(bd.jy_modulus.y_coef) * exp(ln_y_tail)
                + LogMagnitude::from_f64(bd.jy_modulus.w_coef) * exp(ln_w_tail));
    let tail_ii = exp(qf.ln() + (2.0 * bd.jw_sup).ln() + ln_w_tail)
        + exp(qf.ln() + pf.ln() + ln_psi_tail(n as u64))
            * LogMagnitude::from_f64(bd.jw_lipschitz)
            * exp(ln_y_tail.max(ln_w_tail));
    let tail_iv = exp(pf.ln() + bd.jy_sup.ln() + ln_y_tail) + exp(qf.ln() + bd.jw_sup.ln() + ln_w_tail);
    Ok(Decomposition {
        k,
        n,
        depth,
        terms,
        tail_ln: [ln_of(tail_i), ln_of(tail_ii), f64::NEG_INFINITY, ln_of(tail_iv), f64::NEG_INFINITY],
        total,
        residual,
    })
}

/// `ln((n-1)!)` for an exact position.
fn ln_factorial_before(n: &Natural) -> LogTower {
    let m = n - Natural::one();
    match m.to_u64() {
        Some(small) => LogTower::from_f64(ln_factorial(small)),
        None => ln_factorial_tower(&LogTower::from_ln_f64(ln_natural(&m))),
    }
}

/// Bounds `B_I..B_IV`, all of the form `scaled * eps / (N-1)!`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermBounds {
    /// `B * (N-1)! / eps` per term; these add up to `C'`.
    pub scaled: [f64; 4],
    /// `ln B` per term.
    pub ln: [LogTower; 4],
    /// `ln((N-1)!)` at the end of the `N` range that makes the bounds largest.
    pub ln_factorial: LogTower,
}

impl TermBounds {
    pub fn c_prime(&self) -> f64 {
        self.scaled.iter().sum()
    }
}

/// `B_I = p eps/(N-1)!`, `B_II = q p C eps lnln N / (k ln k (N-1)!)`,
/// `B_III = q p ||J_omega|| (N-1) / (k N!)`, `B_IV = p (||J_y|| + q ||J_omega|| C lnln N) / N!`.
///
/// For an interval of positions, `lnln N` is taken at the upper end and
/// everything else at the lower end.
pub fn term_bounds(spec: &FamilySpec, k: u64, position: &SequencePosition, eps: f64) -> TermBounds {
    let Dims { p, q, .. } = spec.dims;
    let (pf, qf) = (p as f64, q as f64);
    let b = &spec.bounds;
    let c = psi_tail_constant();
    let kf = k as f64;
    let lnln_n_hi = position.ln_hi().ln().to_f64();
    let (ln_factorial, ln_n_lo, n_ratio) = match position {
        SequencePosition::Exact(n) => {
            let nf = n.to_f64().unwrap_or(f64::INFINITY);
            (ln_factorial_before(n), ln_natural(n), if nf.is_finite() { (nf - 1.0) / nf } else { 1.0 })
        }
        SequencePosition::Bounded { lo_ln, .. } => {
            // (N-1)! >= (N_lo - 1)!; lo_ln is a strict lower bound on ln N.
            (ln_factorial_tower(&lo_ln.exp()), lo_ln.to_f64(), 1.0)
        }
    };
    let inv_n = (-ln_n_lo).exp().max(f64::MIN_POSITIVE);
    let scaled = [
        pf,
        qf * pf * c * lnln_n_hi / (kf * kf.ln()),
        qf * pf * b.jw_sup * n_ratio / (kf * eps),
        pf * (b.jy_sup + qf * b.jw_sup * c * lnln_n_hi) * inv_n / eps,
    ];
    let ln = scaled.map(|s| {
        // a vanishing bound is kept as the most negative finite logarithm
        let ln_scaled = if s > 0.0 { (s * eps).ln() } else { f64::MIN };
        LogTower::from_f64(ln_scaled).sub(&ln_factorial)
    });
    TermBounds { scaled, ln, ln_factorial }
}

/// Pointwise comparison of computed terms with their bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermCheck {
    pub samples: usize,
    pub depth: usize,
    /// Largest `ln(|term| / B)` seen for I..IV; `-inf` encoded as `null`.
    pub max_ln_ratio: [Option<f64>; 4],
    pub max_residual: f64,
    pub passed: bool,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Decomposes every `y` and compares `|I|..|IV|` with `bounds`.
#[allow(clippy::too_many_arguments)]
pub fn check_terms(
    spec: &FamilySpec,
    maps: &DenseMaps,
    ys: &[FactorialDigits],
    t: &[f64],
    k: usize,
    n: usize,
    depth: usize,
    bounds: &TermBounds,
    exec: Exec,
) -> Result<TermCheck> {
    let parts = exec.try_map(ys, |y| decompose(spec, maps, y, t, k, n, depth))?;
    let bound_ln: Vec<f64> = bounds.ln.iter().map(LogTower::to_f64).collect();
    let mut worst = [f64::NEG_INFINITY; 4];
    let mut max_residual = 0.0f64;
    for d in &parts {
        for (i, w) in worst.iter_mut().enumerate() {
            *w = w.max(d.term_norm(i).ln_abs_or_neg_inf() - bound_ln[i]);
        }
        max_residual = max_residual.max(d.residual);
    }
    Ok(TermCheck {
        samples: parts.len(),
        depth,
        max_ln_ratio: worst.map(finite),
        max_residual,
        passed: worst.iter().all(|&w| w <= 0.0),
    })
}

/// Every prefix of `D_k`, each extended by `suffixes` seeded random tails to `depth`.
pub fn prefix_samples(p: usize, k: usize, depth: usize, suffixes: usize, seed: u64, caps: &crate::dense::MapCaps) -> Result<Vec<FactorialDigits>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for tuple in crate::dense::enumerate_d(k, p, caps)? {
        let prefix = tuple.to_digits().expect("k >= 3");
        for _ in 0..suffixes {
            out.push(prefix.extend_random(depth, &mut rng));
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Bounded,
}

/// `(n-d) ln(C' eps) - (n-d-p) ln((N-1)!)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductForm {
    pub c_prime: f64,
    pub eps_exponent: usize,
    pub factorial_exponent: usize,
    pub log_value: LogTower,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceCertificate {
    pub family: String,
    pub params: std::collections::BTreeMap<String, f64>,
    pub dims: Dims,
    pub epsilon: f64,
    pub t: Vec<f64>,
    pub k: u64,
    pub mode: Mode,
    pub conditions: Vec<ConditionCheck>,
    pub psi_constant: f64,
    pub j: MapChoice,
    #[serde(rename = "N")]
    pub position: SequencePosition,
    pub term_bounds: TermBounds,
    pub c_prime: f64,
    pub ball_radius_log: LogTower,
    pub cover_count_log: LogTower,
    pub measure_bound_log: LogTower,
    pub product_form: ProductForm,
    pub deviations: Vec<String>,
    pub verification: Option<TermCheck>,
    pub verified: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CertifyOptions {
    /// Random suffixes per prefix in the pointwise check.
    pub suffixes: usize,
    pub seed: u64,
    /// Largest `N` for which the pointwise check runs.
    pub verify_horizon: usize,
    pub exec: Exec,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self { suffixes: 10, seed: 0, verify_horizon: 5000, exec: Exec::default() }
    }
}

/// Runs the whole slice argument at `(eps, t)`.
pub fn covering_certificate(
    spec: &FamilySpec,
    maps: &DenseMaps,
    eps: f64,
    t: &[f64],
    opts: &CertifyOptions,
) -> Result<SliceCertificate> {
    check_maps(spec, maps)?;
    if t.len() != spec.dims.d {
        return Err(Error::DimensionMismatch { expected: spec.dims.d, got: t.len() });
    }
    let k = select_k(spec, eps)?;
    let conditions = conditions(spec, eps, k).to_vec();
    let k_usize = usize::try_from(k).map_err(|_| Error::OutOfRange { what: "level", detail: k.to_string() })?;
    let choice = choose_index(spec, maps, k_usize, t, opts.exec)?;
    let bounds = term_bounds(spec, k, &choice.position, eps);
    let c_prime = bounds.c_prime();
    let Dims { p, .. } = spec.dims;
    let m = spec.dims.m();
    let ln_c_eps = LogTower::from_f64((c_prime * eps).ln());
    let ball_radius_log = ln_c_eps.sub(&bounds.ln_factorial);
    let cover_factorial = match &choice.position {
        SequencePosition::Exact(_) => bounds.ln_factorial,
        SequencePosition::Bounded { hi_ln, .. } => ln_factorial_tower(&hi_ln.exp()),
    };
    let cover_count_log = cover_factorial.mul_f64(p as f64);
    let mut measure_bound_log = ln_c_eps.mul_f64(m as f64);
    if m > p {
        measure_bound_log = measure_bound_log.sub(&bounds.ln_factorial.mul_f64((m - p) as f64));
    }
    let mode = if choice.position.exact().is_some() { Mode::Exact } else { Mode::Bounded };

    let mut deviations = vec![
        format!(
            "condition radii use C·lnln k/(k−1)! with certified C = {}",
            psi_tail_constant()
        ),
        "term bounds carry the dimension factors p and q of the max-entry norm".to_string(),
    ];
    let ll = lnln(k as f64);
    if spec.bounds.jw_sup >= ll {
        deviations.push(format!(
            "‖J_ω‖ = {} exceeds lnln k = {ll:.6}; III bound uses the numeric norm",
            spec.bounds.jw_sup
        ));
    }
    let mut verified = conditions.iter().all(|c| c.holds);
    if let MapChoice::Exact { clamped: true, .. } = choice.map {
        deviations.push("target matrix left the grid range; III bound not guaranteed".into());
        verified = false;
    }
    let mut verification = None;
    match &choice.position {
        SequencePosition::Bounded { .. } => deviations.push(
            "N known only as an interval of ln N; term bounds use its lower end, the cover count its upper end; pointwise check skipped"
                .into(),
        ),
        SequencePosition::Exact(n) => match n.to_usize().filter(|&n| n <= opts.verify_horizon) {
            Some(n) => {
                let depth = n + 3;
                let ys = prefix_samples(p, k_usize, depth - 1, opts.suffixes, opts.seed, maps.caps())?;
                let check = check_terms(spec, maps, &ys, t, k_usize, n, depth, &bounds, opts.exec)?;
                verified &= check.passed;
                verification = Some(check);
            }
            None => deviations.push(format!("pointwise check skipped: N = {n} exceeds the horizon {}", opts.verify_horizon)),
        },
    }
    Ok(SliceCertificate {
        family: spec.name.clone(),
        params: spec.params.clone(),
        dims: spec.dims,
        epsilon: eps,
        t: t.to_vec(),
        k,
        mode,
        conditions,
        psi_constant: psi_tail_constant(),
        j: choice.map,
        position: choice.position,
        product_form: ProductForm {
            c_prime,
            eps_exponent: m,
            factorial_exponent: m - p,
            log_value: measure_bound_log,
        },
        term_bounds: bounds,
        c_prime,
        ball_radius_log,
        cover_count_log,
        measure_bound_log,
        deviations,
        verification,
        verified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{bent_line, sawyer_line, sawyer_parabola, twist_pair};
    use crate::dense::DenseMapIndex;
    use num_traits::One;
    use rand::Rng;

    fn nat(n: u64) -> Natural {
        Natural::from(n)
    }

    #[test]
    fn select_k_examples() {
        let line = sawyer_line(0.3);
        assert_eq!(select_k(&line, 0.05).unwrap(), 4);
        assert_eq!(select_k(&line, 10.0).unwrap(), 4);
        let k = select_k(&line, 0.001).unwrap();
        assert!((3000..=5000).contains(&k), "k = {k}");
        // oracle: condition 5 alone binds there
        let cond5 = |k: f64| k.ln().ln().powi(2) / k;
        assert!(cond5(k as f64) < 0.001 && cond5(k as f64 - 1.0) >= 0.001);
        assert_eq!(select_k(&line, 0.02).unwrap(), 124);
        assert_eq!(select_k(&line, 0.01).unwrap(), 304);
        assert!(matches!(select_k(&sawyer_line(5.0), 0.05), Err(Error::NoAdmissibleLevel { condition: 3, .. })));
        assert!(select_k(&line, 1e-9).unwrap() > LINEAR_SCAN_LIMIT);
    }

    #[test]
    fn bent_line_conditions_are_live() {
        let spec = bent_line(0.25, 0.03).unwrap();
        let c = conditions(&spec, 0.05, 4);
        assert!(c.iter().all(|c| c.holds));
        assert!(c[0].lhs > 0.0 && c[1].lhs > 0.0);
        assert_eq!(select_k(&spec, 0.05).unwrap(), 4);
    }

    #[test]
    fn choose_index_examples() {
        let maps = DenseMaps::new(1, 1);
        let line = sawyer_line(0.3);
        let at_one = choose_index(&line, &maps, 4, &[1.0], Exec::Parallel).unwrap();
        assert!(matches!(&at_one.map, MapChoice::Exact { index, .. } if index.j == nat(64)));
        assert_eq!(at_one.position, SequencePosition::Exact(nat(67)));
        let at_zero = choose_index(&line, &maps, 4, &[0.0], Exec::Sequential).unwrap();
        assert!(matches!(&at_zero.map, MapChoice::Exact { index, .. } if index.j == nat(1)));
        assert_eq!(at_zero.position, SequencePosition::Exact(nat(4)));
        let level3 = choose_index(&line, &maps, 3, &[0.7], Exec::Sequential).unwrap();
        assert_eq!(level3.position, SequencePosition::Exact(nat(3)));
        let twist = choose_index(&twist_pair(0.3), &DenseMaps::new(1, 2), 4, &[1.0], Exec::Parallel).unwrap();
        assert_eq!(twist.position, SequencePosition::Exact(nat(4099)));
    }

    #[test]
    fn linear_family_has_no_first_two_terms() {
        let maps = DenseMaps::new(1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y = FactorialDigits::random(1, 69, &mut rng);
        let d = decompose(&sawyer_line(0.3), &maps, &y, &[1.0], 4, 67, 70).unwrap();
        assert!(d.terms[0][0].is_zero() && d.terms[1][0].is_zero());
        assert!(d.residual <= 1e-12);
        // |III| = |0.3 - r_67| y_67 / 67!, r_67 the upper grid point
        let g = maps.grid(4).unwrap().point(1);
        let expected = (0.3 - g) * f64::from(y.level(67)[0]);
        let got = d.terms[2][0];
        if expected == 0.0 {
            assert!(got.is_zero());
        } else {
            assert!((got.ln_abs - (expected.ln() - ln_factorial(67))).abs() < 1e-12);
        }
    }

    #[test]
    fn telescoping_small_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let families = [sawyer_line(0.3), sawyer_parabola(0.3), bent_line(0.25, 0.03).unwrap(), twist_pair(0.3)];
        for spec in &families {
            let maps = DenseMaps::new(spec.dims.p, spec.dims.q);
            for (n, depth) in [(3, 20), (4, 20), (5, 70), (20, 70), (69, 70)] {
                let k = n.clamp(3, 4);
                let y = FactorialDigits::random(1, depth - 1, &mut rng);
                let t = [rng.random_range(0.0..=1.0)];
                let d = decompose(spec, &maps, &y, &t, k, n, depth).unwrap();
                assert!(d.residual <= 1e-12, "{} N={n}: {}", spec.name, d.residual);
            }
        }
    }

    #[test]
    fn terms_respect_bounds_at_level_four() {
        let families = [sawyer_line(0.3), sawyer_parabola(0.3), bent_line(0.25, 0.03).unwrap()];
        for spec in &families {
            let maps = DenseMaps::new(1, 1);
            let choice = choose_index(spec, &maps, 4, &[1.0], Exec::Parallel).unwrap();
            let n = choice.position.exact().unwrap().to_usize().unwrap();
            let bounds = term_bounds(spec, 4, &choice.position, 0.05);
            let ys = prefix_samples(1, 4, n + 2, 3, 1, maps.caps()).unwrap();
            let check = check_terms(spec, &maps, &ys, &[1.0], 4, n, n + 3, &bounds, Exec::Parallel).unwrap();
            assert!(check.passed, "{}: {:?}", spec.name, check);
        }
    }

    #[test]
    fn term_bound_values() {
        let line = sawyer_line(0.3);
        let b = term_bounds(&line, 4, &SequencePosition::Exact(nat(67)), 0.05);
        assert!((b.ln[0].to_f64() - (0.05f64.ln() - ln_factorial(66))).abs() < 1e-9);
        let iii = (0.25f64 * 66.0).ln() - ln_factorial(67);
        assert!((b.ln[2].to_f64() - iii).abs() < 1e-9);
        assert!((b.ln[2].to_f64() + 214.93).abs() < 0.01);
        // bounds are largest at the low end of an interval
        let interval = DenseMaps::new(1, 1).block_interval(4540);
        let wide = term_bounds(&line, 4540, &interval, 0.001);
        assert!(wide.ln[2].to_f64() < -100.0 * 10f64.ln());
        assert!(wide.ln.iter().all(|l| l.to_f64() < -1e300 || l.height() > 0));
    }

    #[test]
    fn certificate_shapes() {
        let line = sawyer_line(0.3);
        let maps = DenseMaps::new(1, 1);
        let opts = CertifyOptions { suffixes: 2, ..CertifyOptions::default() };
        let cert = covering_certificate(&line, &maps, 0.05, &[1.0], &opts).unwrap();
        assert_eq!(cert.k, 4);
        assert_eq!(cert.position, SequencePosition::Exact(nat(67)));
        assert!(cert.verified, "{:?}", cert.verification);
        assert_eq!(cert.product_form.factorial_exponent, 0);
        assert_eq!(cert.measure_bound_log.to_f64(), (cert.c_prime * 0.05).ln());
        let recomposed = cert.cover_count_log.add(&cert.ball_radius_log);
        assert!((recomposed.to_f64() - cert.measure_bound_log.to_f64()).abs() < 1e-9);
        assert!(cert.deviations.iter().any(|d| d.contains("‖J_ω‖ = 1")));

        let bounded = covering_certificate(&line, &maps, 0.001, &[1.0], &opts).unwrap();
        assert_eq!(bounded.mode, Mode::Bounded);
        assert!(bounded.verification.is_none());
        assert!(matches!(bounded.j, MapChoice::Interval { .. }));
    }

    #[test]
    fn twist_certificate_decreases_with_eps() {
        let twist = twist_pair(0.3);
        let maps = DenseMaps::new(1, 2);
        let opts = CertifyOptions { suffixes: 1, ..CertifyOptions::default() };
        let logs: Vec<LogTower> = [0.05, 0.02, 0.01]
            .iter()
            .map(|&e| covering_certificate(&twist, &maps, e, &[1.0], &opts).unwrap().measure_bound_log)
            .collect();
        assert!(logs[0] > logs[1] && logs[1] > logs[2], "{logs:?}");
        let first = covering_certificate(&twist, &maps, 0.05, &[1.0], &opts).unwrap();
        let expected = 2.0 * (first.c_prime * 0.05).ln() - ln_factorial(4098);
        assert!((first.measure_bound_log.to_f64() - expected).abs() < 1e-6);
        assert!(first.verified);
    }

    #[test]
    fn extension_matches_chosen_map() {
        let maps = DenseMaps::new(1, 1);
        let idx = DenseMapIndex { k: 4, j: nat(64) };
        let pos = maps.position_of(4, &idx.j).unwrap();
        let y = FactorialDigits::from_levels(1, &[vec![1], vec![2]]).unwrap();
        let r = maps.r_eval(&pos, &y.extend_random(70, &mut ChaCha8Rng::seed_from_u64(0))).unwrap();
        assert!(r[(0, 0)] > 0.0);
        assert!(Natural::one() <= idx.j);
    }
}
