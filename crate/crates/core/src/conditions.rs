//! Numerical membership checks for the function classes under which the
//! gap `E f(X+Y) - E f(X) - E f(Y)` is nonnegative.
//!
//! Every check is sample based, so a passing verdict is evidence rather than
//! proof; verdicts carry their sample counts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function::{FunctionSpec, KINK_EPS};
use crate::lowdisc::ShiftedHalton;
use crate::quad::{integrate, QuadOptions};

/// A verdict holds iff its worst violation is at most this.
pub const VIOLATION_TOL: f64 = 1e-7;
pub const MAX_GRID: usize = 512;
pub const SYM_SUM_POINTS: usize = 512;
pub const CROSS_SAMPLES: usize = 20_000;
pub const EVENNESS_TOL: f64 = 1e-9;
pub const DEFAULT_CROSS_SEED: u64 = 0x5eed;
const MAX_REPORTED_UNKNOWN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    ConvexSecondDeriv,
    SymmetricSumNondecreasing,
    CrossCondition,
    SqrtConvex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionVerdict {
    pub condition: Condition,
    pub function: String,
    pub holds: bool,
    pub worst_violation: f64,
    /// Point(s) achieving the worst violation.
    pub witness: Vec<f64>,
    /// `(-B, C)` restriction of the check.
    pub range: Option<(f64, f64)>,
    pub samples: usize,
    /// Points excluded because `f''` is undefined or not finite there.
    pub unknown: Vec<f64>,
    pub unknown_count: usize,
    pub warnings: Vec<String>,
}

impl ConditionVerdict {
    fn new(condition: Condition, f: &FunctionSpec, range: Option<(f64, f64)>) -> Self {
        ConditionVerdict {
            condition,
            function: f.label().to_string(),
            holds: true,
            worst_violation: 0.0,
            witness: Vec::new(),
            range,
            samples: 0,
            unknown: Vec::new(),
            unknown_count: 0,
            warnings: Vec::new(),
        }
    }

    fn record(&mut self, violation: f64, witness: &[f64]) {
        if violation > self.worst_violation {
            self.worst_violation = violation;
            self.witness = witness.to_vec();
        }
    }

    fn mark_unknown(&mut self, y: f64) {
        self.unknown_count += 1;
        if self.unknown.len() < MAX_REPORTED_UNKNOWN && !self.unknown.contains(&y) {
            self.unknown.push(y);
        }
    }

    fn finish(mut self) -> Self {
        self.holds = self.worst_violation <= VIOLATION_TOL;
        if self.unknown_count > 0 {
            self.warnings.push(format!(
                "{} evaluation(s) excluded where f'' is undefined, e.g. at {:?}",
                self.unknown_count, self.unknown
            ));
        }
        self
    }
}

/// Uniform grid of `n` points on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::param("grid", format!("need lo < hi, got [{lo}, {hi}]")));
        }
        if !(2..=MAX_GRID).contains(&n) {
            return Err(Error::param("grid", format!("need 2 <= n <= {MAX_GRID}, got {n}")));
        }
        Ok(Grid { lo, hi, n })
    }

    pub fn points(&self) -> Vec<f64> {
        let step = (self.hi - self.lo) / (self.n - 1) as f64;
        (0..self.n)
            .map(|i| {
                if i + 1 == self.n {
                    self.hi
                } else {
                    self.lo + i as f64 * step
                }
            })
            .collect()
    }
}

/// Second derivative, or `None` at declared kinks and non-finite values.
fn second_derivative(f: &FunctionSpec, y: f64) -> Option<f64> {
    if f.near_kink(y, KINK_EPS) {
        return None;
    }
    let v = f.d2_raw(y);
    v.is_finite().then_some(v)
}

/// For finite-difference `f''`, flags points where halving the step changes
/// the estimate substantially (an undeclared kink).
fn suspect_kink(f: &FunctionSpec, y: f64) -> bool {
    if f.has_analytic_d2() {
        return false;
    }
    let h = f.fd_step(y);
    let half = (f.eval(y + 0.5 * h) - 2.0 * f.eval(y) + f.eval(y - 0.5 * h)) / (0.25 * h * h);
    let full = f.fd_d2(y);
    (half - full).abs() > 1e-3 * full.abs().max(1.0)
}

fn note_suspects(verdict: &mut ConditionVerdict, f: &FunctionSpec, ys: &[f64]) {
    let suspects: Vec<f64> = ys
        .iter()
        .copied()
        .filter(|&y| suspect_kink(f, y))
        .take(MAX_REPORTED_UNKNOWN)
        .collect();
    if !suspects.is_empty() {
        verdict.warnings.push(format!(
            "finite-difference f'' is unstable (possible undeclared kink) near {suspects:?}"
        ));
    }
}

/// Midpoint convexity of `f''` over all pairs of grid points.
pub fn check_convex_second_derivative(f: &FunctionSpec, grid: &Grid) -> Result<ConditionVerdict> {
    let mut verdict = ConditionVerdict::new(Condition::ConvexSecondDeriv, f, Some((grid.lo, grid.hi)));
    let ys = grid.points();
    let values: Vec<Option<f64>> = ys.iter().map(|&y| second_derivative(f, y)).collect();
    for (y, v) in ys.iter().zip(&values) {
        if v.is_none() {
            verdict.mark_unknown(*y);
        }
    }
    for i in 0..ys.len() {
        let Some(vi) = values[i] else { continue };
        for j in i + 1..ys.len() {
            let Some(vj) = values[j] else { continue };
            let mid = 0.5 * (ys[i] + ys[j]);
            let Some(vm) = second_derivative(f, mid) else {
                verdict.mark_unknown(mid);
                continue;
            };
            verdict.samples += 1;
            verdict.record(vm - 0.5 * (vi + vj), &[ys[i], ys[j]]);
        }
    }
    note_suspects(&mut verdict, f, &ys);
    Ok(verdict.finish())
}

/// `t -> f''(t) + f''(-t)` nondecreasing on 512 points of `(0, t_max]`.
pub fn check_symmetric_sum_nondecreasing(f: &FunctionSpec, t_max: f64) -> Result<ConditionVerdict> {
    if !(t_max.is_finite() && t_max > 0.0) {
        return Err(Error::param("t_max", format!("must be positive, got {t_max}")));
    }
    let mut verdict = ConditionVerdict::new(Condition::SymmetricSumNondecreasing, f, Some((-t_max, t_max)));
    let mut prev: Option<(f64, f64)> = None;
    let ts: Vec<f64> = (1..=SYM_SUM_POINTS)
        .map(|i| t_max * i as f64 / SYM_SUM_POINTS as f64)
        .collect();
    for &t in &ts {
        let g = match (second_derivative(f, t), second_derivative(f, -t)) {
            (Some(a), Some(b)) => a + b,
            _ => {
                verdict.mark_unknown(t);
                continue;
            }
        };
        if let Some((tp, gp)) = prev {
            verdict.samples += 1;
            verdict.record(gp - g, &[tp, t]);
        }
        prev = Some((t, g));
    }
    note_suspects(&mut verdict, f, &ts);
    Ok(verdict.finish())
}

/// `f''(-a) + f''(b) >= f''(-a+g) + f''(b-g)` for `a, b > 0`, `0 < g < a+b`,
/// with all four points inside `(-B, C)`; 20000 quasi-random triples.
pub fn check_cross_condition(f: &FunctionSpec, b_left: f64, c_right: f64) -> Result<ConditionVerdict> {
    check_cross_condition_seeded(f, b_left, c_right, CROSS_SAMPLES, DEFAULT_CROSS_SEED)
}

pub fn check_cross_condition_seeded(
    f: &FunctionSpec,
    b_left: f64,
    c_right: f64,
    samples: usize,
    seed: u64,
) -> Result<ConditionVerdict> {
    if !(b_left.is_finite() && b_left > 0.0) {
        return Err(Error::param("B", format!("must be positive, got {b_left}")));
    }
    if !(c_right.is_finite() && c_right > 0.0) {
        return Err(Error::param("C", format!("must be positive, got {c_right}")));
    }
    let mut verdict = ConditionVerdict::new(Condition::CrossCondition, f, Some((-b_left, c_right)));
    let mut skipped = 0usize;
    for u in ShiftedHalton::new(3, seed).take(samples) {
        let alpha = u[0] * b_left;
        let beta = u[1] * c_right;
        let gamma = u[2] * (alpha + beta);
        if alpha <= 0.0 || beta <= 0.0 || gamma <= 0.0 {
            skipped += 1;
            continue;
        }
        let pts = [-alpha, beta, -alpha + gamma, beta - gamma];
        if pts.iter().any(|&y| f.near_kink(y, KINK_EPS)) {
            skipped += 1;
            continue;
        }
        let vals: Vec<f64> = pts.iter().map(|&y| f.d2_raw(y)).collect();
        if let Some(k) = vals.iter().position(|v| !v.is_finite()) {
            verdict.mark_unknown(pts[k]);
            continue;
        }
        verdict.samples += 1;
        verdict.record((vals[2] + vals[3]) - (vals[0] + vals[1]), &[alpha, beta, gamma]);
    }
    if skipped > 0 {
        verdict.warnings.push(format!(
            "{skipped} triple(s) skipped at declared kinks or degenerate coordinates"
        ));
    }
    Ok(verdict.finish())
}

/// `f` even and `y -> f(sqrt(y))` midpoint convex on a nonnegative grid.
pub fn check_sqrt_convex(f: &FunctionSpec, grid: &Grid) -> Result<ConditionVerdict> {
    if grid.lo < 0.0 {
        return Err(Error::param(
            "grid",
            format!("must lie in y >= 0, got lo = {}", grid.lo),
        ));
    }
    let mut verdict = ConditionVerdict::new(Condition::SqrtConvex, f, Some((grid.lo, grid.hi)));
    let ys = grid.points();
    let mut odd_part = 0.0f64;
    let mut odd_at = 0.0;
    for &y in &ys {
        let (p, n) = (f.eval(y.sqrt()), f.eval(-y.sqrt()));
        if !(p.is_finite() && n.is_finite()) {
            verdict.mark_unknown(y.sqrt());
            continue;
        }
        if (p - n).abs() > odd_part {
            odd_part = (p - n).abs();
            odd_at = y.sqrt();
        }
    }
    let u = |y: f64| f.eval(y.sqrt());
    let values: Vec<f64> = ys.iter().map(|&y| u(y)).collect();
    for i in 0..ys.len() {
        for j in i + 1..ys.len() {
            let vm = u(0.5 * (ys[i] + ys[j]));
            if !(vm.is_finite() && values[i].is_finite() && values[j].is_finite()) {
                continue;
            }
            verdict.samples += 1;
            verdict.record(vm - 0.5 * (values[i] + values[j]), &[ys[i], ys[j]]);
        }
    }
    let not_even = odd_part > EVENNESS_TOL;
    if not_even {
        verdict
            .warnings
            .push(format!("f is not even: |f(y) - f(-y)| = {odd_part:e} at y = {odd_at}"));
        verdict.record(odd_part, &[odd_at, -odd_at]);
    }
    let mut verdict = verdict.finish();
    // evenness has its own, tighter tolerance
    verdict.holds &= !not_even;
    Ok(verdict)
}

/// `|f(x+y) - f(x) - f'(x) y - y^2 Q|` with
/// `Q = int_0^1 (1-z) f''(x + z y) dz` by adaptive quadrature.
pub fn taylor_remainder_gap(f: &FunctionSpec, x: f64, y: f64) -> Result<f64> {
    if y == 0.0 {
        return Ok(0.0);
    }
    // split where x + z y crosses a listed non-smooth point of f''
    let (lo, hi) = (x.min(x + y), x.max(x + y));
    let mut cuts: Vec<f64> = f.breakpoints_in(lo, hi).iter().map(|b| (b - x) / y).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.insert(0, 0.0);
    cuts.push(1.0);
    let mut q = 0.0;
    for w in cuts.windows(2) {
        q += integrate(|z| (1.0 - z) * f.d2_raw(x + z * y), w[0], w[1], &QuadOptions::default())?.value;
    }
    let lhs = f.value(x + y)?;
    let rhs = f.value(x)? + f.d1(x)? * y + y * y * q;
    Ok((lhs - rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(-10.0, 10.0, 201).unwrap()
    }

    fn pow(rho: f64) -> FunctionSpec {
        FunctionSpec::abs_pow(rho).unwrap()
    }

    #[test]
    fn convex_second_derivative_examples() {
        assert!(
            check_convex_second_derivative(&FunctionSpec::poly(vec![0.0, 0.0, 0.0, 0.0, 1.0]), &grid())
                .unwrap()
                .holds
        );
        let v = check_convex_second_derivative(&pow(1.5), &grid()).unwrap();
        assert!(!v.holds);
        assert!(v.unknown.contains(&0.0), "{v:?}");
        // the worst midpoint sits next to the singularity of f''
        assert!((0.5 * (v.witness[0] + v.witness[1])).abs() < 1.0, "{v:?}");
        // f'' = 3.75 |y|^0.5 is concave on each half-line
        assert!(!check_convex_second_derivative(&pow(2.5), &grid()).unwrap().holds);
    }

    #[test]
    fn symmetric_sum_examples() {
        assert!(check_symmetric_sum_nondecreasing(&pow(3.0), 10.0).unwrap().holds);
        let neg = FunctionSpec::neg_abs_pow(1.5).unwrap();
        assert!(check_symmetric_sum_nondecreasing(&neg, 10.0).unwrap().holds);
        let v = check_symmetric_sum_nondecreasing(&pow(1.5), 10.0).unwrap();
        assert!(!v.holds && v.witness.len() == 2);
        assert!(check_symmetric_sum_nondecreasing(&pow(3.0), 0.0).is_err());
    }

    #[test]
    fn cross_condition_examples() {
        for f in [
            FunctionSpec::poly(vec![0.0, 0.0, 0.0, 0.0, 1.0]),
            pow(3.0),
            FunctionSpec::floor_convex(),
            FunctionSpec::sawtooth(),
        ] {
            let v = check_cross_condition(&f, 10.0, 10.0).unwrap();
            assert!(v.holds, "{}: {v:?}", f.label());
            assert!(v.samples > 19_000);
        }
        assert!(!check_cross_condition(&pow(2.5), 10.0, 10.0).unwrap().holds);
        assert!(check_cross_condition(&pow(2.5), 0.0, 10.0).is_err());
    }

    #[test]
    fn sqrt_convex_examples() {
        let g = Grid::new(0.0, 25.0, 101).unwrap();
        assert!(check_sqrt_convex(&pow(2.5), &g).unwrap().holds);
        assert!(!check_sqrt_convex(&pow(1.5), &g).unwrap().holds);
        assert!(
            check_sqrt_convex(&FunctionSpec::poly(vec![0.0, 0.0, 1.0]), &g)
                .unwrap()
                .holds
        );
        // odd function fails evenness
        assert!(
            !check_sqrt_convex(&FunctionSpec::poly(vec![0.0, 0.0, 1.0, 1.0]), &g)
                .unwrap()
                .holds
        );
        assert!(check_sqrt_convex(&pow(2.5), &grid()).is_err());
    }

    #[test]
    fn taylor_examples() {
        let cube = FunctionSpec::poly(vec![0.0, 0.0, 0.0, 1.0]);
        assert!(taylor_remainder_gap(&cube, 1.0, 2.0).unwrap() <= 1e-9);
        let sq = FunctionSpec::poly(vec![0.0, 0.0, 1.0]);
        for (x, y) in [(0.3, -2.0), (-4.0, 1.5)] {
            assert!(taylor_remainder_gap(&sq, x, y).unwrap() <= 1e-12);
        }
        assert_eq!(taylor_remainder_gap(&cube, 2.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn taylor_splits_at_breaks() {
        // f'' = 6|y| bends just inside a panel edge; unsplit GK15 misses it
        let f = pow(3.0);
        assert!(taylor_remainder_gap(&f, 2.4927826043771795, -3.9881908512632336).unwrap() <= 1e-10);
        assert_eq!(f.breakpoints_in(-1.0, 1.0), vec![0.0]);
        assert!(pow(4.0).breakpoints_in(-1.0, 1.0).is_empty());
    }

    #[test]
    fn fd_only_function_flags_kink() {
        let f = FunctionSpec::new("abs3", |y: f64| y.abs().powi(3) + (y - 0.3).abs());
        let v = check_convex_second_derivative(&f, &Grid::new(-1.0, 1.0, 21).unwrap()).unwrap();
        assert!(v.warnings.iter().any(|w| w.contains("undeclared kink")), "{v:?}");
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(1.0, 0.0, 10).is_err());
        assert!(Grid::new(0.0, 1.0, 513).is_err());
        assert!(Grid::new(0.0, 1.0, 1).is_err());
        assert_eq!(Grid::new(0.0, 1.0, 3).unwrap().points(), vec![0.0, 0.5, 1.0]);
    }
}
