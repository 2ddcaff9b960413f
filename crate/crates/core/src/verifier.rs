//! Exact gap computations, the two-point functionals behind the positivity
//! arguments, randomized searches for violations, and derivative-free search
//! for pairs that attain the sharp constants.

use std::cell::Cell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{psi_extremum, sharp_bounds, Extremum, PsiPoint, Regime, VarClass};
use crate::decompose::MixtureDecomposition;
use crate::distributions::{
    random_centered_with, random_symmetric_with, random_two_point_centered_with, random_two_point_symmetric_with,
    FiniteDistribution, TwoPointCentered, TwoPointSymmetric,
};
use crate::error::{Error, Result};
use crate::function::FunctionSpec;
use crate::lowdisc::ShiftedHalton;
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::quad::{integrate, QuadOptions};

/// Envelope tolerance for fuzzed moment ratios.
pub const RATIO_TOL: f64 = 1e-9;
/// A gap counts as a violation below `-GAP_TOL * (1 + |E f(X+Y)|)`.
pub const GAP_TOL: f64 = 1e-9;
/// Distance to the sharp constant at which it counts as attained.
pub const SHARPNESS_TOL: f64 = 1e-6;
pub const RATIO_RESTARTS: usize = 20;
/// Largest atom in a fuzzed multi-atom law.
pub const FUZZ_MAX_ATOMS: usize = 12;
/// Log-parameters are clamped to `[max - LOG_SPREAD, max]`.
const LOG_SPREAD: f64 = 40.0;
const START_BOX: f64 = 3.0;
const MAX_REPORTED_VIOLATIONS: usize = 16;

/// An independent pair `(X, Y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub d1: FiniteDistribution,
    pub d2: FiniteDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapResult {
    pub function: String,
    /// `E f(X+Y) - E f(X) - E f(Y)`.
    pub gap: f64,
    pub sum_expectation: f64,
    pub rho: Option<f64>,
    /// `E|X+Y|^rho / (E|X|^rho + E|Y|^rho)`; absent when the denominator is 0.
    pub ratio: Option<f64>,
    pub d1: FiniteDistribution,
    pub d2: FiniteDistribution,
}

/// The gap of `f` at an independent pair.
pub fn gap(f: &FunctionSpec, d1: &FiniteDistribution, d2: &FiniteDistribution) -> Result<GapResult> {
    let sum = d1.convolve(d2);
    let sum_expectation = sum.expectation(f)?;
    let gap = sum_expectation - d1.expectation(f)? - d2.expectation(f)?;
    Ok(GapResult {
        function: f.label().to_string(),
        gap,
        sum_expectation,
        rho: None,
        ratio: None,
        d1: d1.clone(),
        d2: d2.clone(),
    })
}

/// [`gap`] plus the moment ratio at exponent `rho`.
pub fn gap_with_ratio(
    f: &FunctionSpec,
    d1: &FiniteDistribution,
    d2: &FiniteDistribution,
    rho: f64,
) -> Result<GapResult> {
    let mut out = gap(f, d1, d2)?;
    out.rho = Some(rho);
    out.ratio = moment_ratio(d1, d2, rho);
    Ok(out)
}

/// `E|X+Y|^rho / (E|X|^rho + E|Y|^rho)` by exact convolution; `None` when
/// both variables vanish.
pub fn moment_ratio(d1: &FiniteDistribution, d2: &FiniteDistribution, rho: f64) -> Option<f64> {
    let den = d1.abs_moment(rho) + d2.abs_moment(rho);
    (den > 0.0).then(|| d1.convolve(d2).abs_moment(rho) / den)
}

/// Scale used for gap tolerances.
pub fn gap_scale(g: &GapResult) -> f64 {
    1.0 + g.sum_expectation.abs()
}

/// Gap as a mixture-weighted sum over all pairs of components.
pub fn mixture_gap(f: &FunctionSpec, m1: &MixtureDecomposition, m2: &MixtureDecomposition) -> Result<f64> {
    let mut total = 0.0;
    for c1 in &m1.components {
        let x = c1.component.distribution();
        for c2 in &m2.components {
            let y = c2.component.distribution();
            total += c1.weight * c2.weight * gap(f, &x, &y)?.gap;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiFour {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub value: f64,
}

/// Four-term functional with `phi(a,b,c,d) = (a+b)(c+d) * gap` for the pair
/// `{-a, b}`, `{-c, d}`. Defined for any nonnegative arguments and zero
/// whenever one of them is.
pub fn phi_four_value(f: &FunctionSpec, r: f64, s: f64, t: f64, u: f64) -> Result<f64> {
    let v = |y: f64| f.value(y);
    Ok(s * u * (v(-r - t)? - v(-r)? - v(-t)?)
        + s * t * (v(-r + u)? - v(-r)? - v(u)?)
        + r * u * (v(s - t)? - v(s)? - v(-t)?)
        + r * t * (v(s + u)? - v(s)? - v(u)?))
}

pub fn phi_four(a: f64, b: f64, c: f64, d: f64, f: &FunctionSpec) -> Result<PhiFour> {
    for (name, x) in [("a", a), ("b", b), ("c", c), ("d", d)] {
        if !(x.is_finite() && x > 0.0) {
            return Err(Error::param(name, format!("must be positive, got {x}")));
        }
    }
    Ok(PhiFour {
        a,
        b,
        c,
        d,
        value: phi_four_value(f, a, b, c, d)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiTwo {
    pub a: f64,
    pub b: f64,
    pub value: f64,
}

/// Symmetric functional with `phi(a,b) = 4 * gap` for the pair `{+-a}`,
/// `{+-b}`.
pub fn phi_two_value(f: &FunctionSpec, r: f64, s: f64) -> Result<f64> {
    let v = |y: f64| f.value(y);
    Ok((v(-r - s)? - v(-r)? - v(-s)?)
        + (v(-r + s)? - v(-r)? - v(s)?)
        + (v(r - s)? - v(r)? - v(-s)?)
        + (v(r + s)? - v(r)? - v(s)?))
}

pub fn phi_two(a: f64, b: f64, f: &FunctionSpec) -> Result<PhiTwo> {
    for (name, x) in [("a", a), ("b", b)] {
        if !(x.is_finite() && x > 0.0) {
            return Err(Error::param(name, format!("must be positive, got {x}")));
        }
    }
    Ok(PhiTwo {
        a,
        b,
        value: phi_two_value(f, a, b)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedDerivativeCheck {
    /// Integral of the fourth mixed partial over the box.
    pub integral: f64,
    pub phi: f64,
    pub residual: f64,
}

/// Integrates `f''(-r-t) + f''(s+u) - f''(-r+u) - f''(s-t)` over
/// `[0,a]x[0,b]x[0,c]x[0,d]` and compares with `phi(a,b,c,d)`; the signed
/// corner sum of `phi` over the box reduces to `phi(a,b,c,d)` because `phi`
/// vanishes on the coordinate faces.
pub fn mixed_derivative_identity_check(
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    f: &FunctionSpec,
) -> Result<MixedDerivativeCheck> {
    let phi = phi_four(a, b, c, d, f)?.value;
    let opts = QuadOptions {
        abs_tol: 1e-9,
        max_intervals: 200,
    };
    let failure: Cell<Option<Error>> = Cell::new(None);
    let level = |g: &dyn Fn(f64) -> f64, hi: f64| -> f64 {
        if let Some(e) = failure.take() {
            failure.set(Some(e));
            return 0.0;
        }
        match integrate(g, 0.0, hi, &opts) {
            Ok(q) => q.value,
            Err(e) => {
                failure.set(Some(e));
                0.0
            }
        }
    };
    let integrand =
        |r: f64, s: f64, t: f64, u: f64| f.d2_raw(-r - t) + f.d2_raw(s + u) - f.d2_raw(-r + u) - f.d2_raw(s - t);
    let integral = level(
        &|u| level(&|t| level(&|s| level(&|r| integrand(r, s, t, u), a), b), c),
        d,
    );
    if let Some(e) = failure.take() {
        return Err(e);
    }
    Ok(MixedDerivativeCheck {
        integral,
        phi,
        residual: (integral - phi).abs(),
    })
}

fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// The pair used by trial `index` of a fuzz campaign: half two-point pairs,
/// half multi-atom pairs with up to 12 atoms each.
pub fn fuzz_pair(class: VarClass, seed: u64, index: u64) -> Pair {
    let mut rng = trial_rng(seed, index);
    let two_point = rng.random_bool(0.5);
    let draw = |rng: &mut ChaCha8Rng| -> FiniteDistribution {
        match (class, two_point) {
            (VarClass::Centered, true) => random_two_point_centered_with(rng).distribution(),
            (VarClass::Symmetric, true) => random_two_point_symmetric_with(rng).distribution(),
            (VarClass::Centered, false) => {
                let n = rng.random_range(2..=FUZZ_MAX_ATOMS);
                random_centered_with(rng, n).expect("n >= 2")
            }
            (VarClass::Symmetric, false) => {
                let n = rng.random_range(2..=FUZZ_MAX_ATOMS);
                random_symmetric_with(rng, n).expect("n >= 2")
            }
        }
    };
    let d1 = draw(&mut rng);
    let d2 = draw(&mut rng);
    Pair { d1, d2 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub trial: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzReport {
    pub rho: f64,
    pub var_class: VarClass,
    pub trials: u64,
    pub seed: u64,
    pub lower: f64,
    pub upper: f64,
    pub tolerance: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub min_pair: Pair,
    pub max_pair: Pair,
    pub violation_count: u64,
    /// First violating trials by index.
    pub violations: Vec<Violation>,
    pub degenerate: u64,
}

impl FuzzReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }
}

#[derive(Clone, Default)]
struct Extremes {
    min: Option<(f64, u64)>,
    max: Option<(f64, u64)>,
    violations: Vec<Violation>,
    violation_count: u64,
    degenerate: u64,
}

impl Extremes {
    fn push_min(slot: &mut Option<(f64, u64)>, v: (f64, u64)) {
        if slot.is_none_or(|cur| v.0 < cur.0 || (v.0 == cur.0 && v.1 < cur.1)) {
            *slot = Some(v);
        }
    }

    fn push_max(slot: &mut Option<(f64, u64)>, v: (f64, u64)) {
        if slot.is_none_or(|cur| v.0 > cur.0 || (v.0 == cur.0 && v.1 < cur.1)) {
            *slot = Some(v);
        }
    }

    fn merge(mut self, other: Extremes) -> Extremes {
        if let Some(v) = other.min {
            Self::push_min(&mut self.min, v);
        }
        if let Some(v) = other.max {
            Self::push_max(&mut self.max, v);
        }
        self.violations.extend(other.violations);
        self.violations.sort_by_key(|v| v.trial);
        self.violations.truncate(MAX_REPORTED_VIOLATIONS);
        self.violation_count += other.violation_count;
        self.degenerate += other.degenerate;
        self
    }
}

/// Checks `lower - 1e-9 <= ratio <= upper + 1e-9` on `trials` random pairs.
///
/// Trial `i` draws from its own stream of the seeded generator, so results
/// do not depend on the number of worker threads.
pub fn fuzz_inequality(rho: f64, class: VarClass, trials: u64, seed: u64) -> Result<FuzzReport> {
    let bounds = sharp_bounds(rho, class)?;
    let (lower, upper) = (bounds.lower, bounds.upper);
    let acc = (0..trials)
        .into_par_iter()
        .fold(Extremes::default, |mut acc, i| {
            let pair = fuzz_pair(class, seed, i);
            match moment_ratio(&pair.d1, &pair.d2, rho) {
                None => acc.degenerate += 1,
                Some(r) => {
                    Extremes::push_min(&mut acc.min, (r, i));
                    Extremes::push_max(&mut acc.max, (r, i));
                    if r < lower - RATIO_TOL || r > upper + RATIO_TOL {
                        acc.violation_count += 1;
                        if acc.violations.len() < MAX_REPORTED_VIOLATIONS {
                            acc.violations.push(Violation { trial: i, value: r });
                        }
                    }
                }
            }
            acc
        })
        .reduce(Extremes::default, Extremes::merge);

    let (min_ratio, min_i) = acc.min.unwrap_or((f64::NAN, 0));
    let (max_ratio, max_i) = acc.max.unwrap_or((f64::NAN, 0));
    Ok(FuzzReport {
        rho,
        var_class: class,
        trials,
        seed,
        lower,
        upper,
        tolerance: RATIO_TOL,
        min_ratio,
        max_ratio,
        min_pair: fuzz_pair(class, seed, min_i),
        max_pair: fuzz_pair(class, seed, max_i),
        violation_count: acc.violation_count,
        violations: acc.violations,
        degenerate: acc.degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapFuzzReport {
    pub function: String,
    pub var_class: VarClass,
    pub trials: u64,
    pub seed: u64,
    pub min_gap: f64,
    /// Smallest `gap / (1 + |E f(X+Y)|)`.
    pub min_scaled_gap: f64,
    pub witness: Pair,
    pub violation_count: u64,
    pub violations: Vec<Violation>,
}

/// Searches random pairs of `class` for negative gaps of `f`.
pub fn fuzz_gap(f: &FunctionSpec, class: VarClass, trials: u64, seed: u64) -> Result<GapFuzzReport> {
    #[derive(Clone, Default)]
    struct Acc {
        min_gap: Option<(f64, u64)>,
        min_scaled: Option<(f64, u64)>,
        violations: Vec<Violation>,
        count: u64,
    }
    let merge = |a: Result<Acc>, b: Result<Acc>| -> Result<Acc> {
        let (mut a, b) = (a?, b?);
        if let Some(v) = b.min_gap {
            Extremes::push_min(&mut a.min_gap, v);
        }
        if let Some(v) = b.min_scaled {
            Extremes::push_min(&mut a.min_scaled, v);
        }
        a.violations.extend(b.violations);
        a.violations.sort_by_key(|v| v.trial);
        a.violations.truncate(MAX_REPORTED_VIOLATIONS);
        a.count += b.count;
        Ok(a)
    };
    let acc = (0..trials)
        .into_par_iter()
        .fold(
            || Ok(Acc::default()),
            |acc: Result<Acc>, i| {
                let mut acc = acc?;
                let pair = fuzz_pair(class, seed, i);
                let g = gap(f, &pair.d1, &pair.d2)?;
                let scaled = g.gap / gap_scale(&g);
                Extremes::push_min(&mut acc.min_gap, (g.gap, i));
                Extremes::push_min(&mut acc.min_scaled, (scaled, i));
                if scaled < -GAP_TOL {
                    acc.count += 1;
                    if acc.violations.len() < MAX_REPORTED_VIOLATIONS {
                        acc.violations.push(Violation { trial: i, value: g.gap });
                    }
                }
                Ok(acc)
            },
        )
        .reduce(|| Ok(Acc::default()), merge)?;
    let (min_scaled_gap, at) = acc.min_scaled.unwrap_or((f64::NAN, 0));
    Ok(GapFuzzReport {
        function: f.label().to_string(),
        var_class: class,
        trials,
        seed,
        min_gap: acc.min_gap.map_or(f64::NAN, |v| v.0),
        min_scaled_gap,
        witness: fuzz_pair(class, seed, at),
        violation_count: acc.count,
        violations: acc.violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpnessReport {
    pub rho: f64,
    pub var_class: VarClass,
    pub which: Extremum,
    pub target: f64,
    pub regime: Regime,
    /// Exact ratio at the witness pair.
    pub ratio: f64,
    pub gap_to_target: f64,
    pub attained: bool,
    pub witness: Pair,
    /// Two-point parameters: `(a, b, c, d)` or `(a, b)`.
    pub params: Vec<f64>,
    pub restarts: usize,
    pub evals: usize,
    /// Independent one-dimensional optimum for the psi regimes.
    pub psi_crosscheck: Option<PsiPoint>,
}

fn params_from_logs(logs: &[f64]) -> Vec<f64> {
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    logs.iter().map(|l| (l - top).max(-LOG_SPREAD).exp()).collect()
}

/// Ratio by direct enumeration of the (at most 4) joint outcomes.
fn enumerated_ratio(xs: &[(f64, f64)], ys: &[(f64, f64)], rho: f64) -> f64 {
    let m = |d: &[(f64, f64)]| d.iter().map(|(x, p)| p * x.abs().powf(rho)).sum::<f64>();
    let mut num = 0.0;
    for (x, p) in xs {
        for (y, q) in ys {
            num += p * q * (x + y).abs().powf(rho);
        }
    }
    num / (m(xs) + m(ys))
}

/// `(value, probability)` pairs.
type Atoms = Vec<(f64, f64)>;

fn two_point_atoms(class: VarClass, params: &[f64]) -> (Atoms, Atoms) {
    match class {
        VarClass::Centered => {
            let (a, b, c, d) = (params[0], params[1], params[2], params[3]);
            (
                vec![(-a, b / (a + b)), (b, a / (a + b))],
                vec![(-c, d / (c + d)), (d, c / (c + d))],
            )
        }
        VarClass::Symmetric => (
            vec![(-params[0], 0.5), (params[0], 0.5)],
            vec![(-params[1], 0.5), (params[1], 0.5)],
        ),
    }
}

fn two_point_pair(class: VarClass, params: &[f64]) -> Pair {
    match class {
        VarClass::Centered => Pair {
            d1: TwoPointCentered {
                a: params[0],
                b: params[1],
            }
            .distribution(),
            d2: TwoPointCentered {
                a: params[2],
                b: params[3],
            }
            .distribution(),
        },
        VarClass::Symmetric => Pair {
            d1: TwoPointSymmetric { a: params[0] }.distribution(),
            d2: TwoPointSymmetric { a: params[1] }.distribution(),
        },
    }
}

/// Nelder–Mead over log-parameters of two-point pairs (centered:
/// `(log a, log b, log c, log d)`, symmetric: `(log a, log b)`), 20 restarts
/// from a shifted Halton design plus a final polish. The result is
/// compared with the sharp constant of the requested side.
pub fn ratio_extremize(rho: f64, class: VarClass, which: Extremum, seed: u64) -> Result<SharpnessReport> {
    let bounds = sharp_bounds(rho, class)?;
    let (target, regime) = match which {
        Extremum::Min => (bounds.lower, bounds.lower_regime),
        Extremum::Max => (bounds.upper, bounds.upper_regime),
    };
    let dim = match class {
        VarClass::Centered => 4,
        VarClass::Symmetric => 2,
    };
    let sign = match which {
        Extremum::Min => 1.0,
        Extremum::Max => -1.0,
    };
    let objective = |logs: &[f64]| {
        let params = params_from_logs(logs);
        let (xs, ys) = two_point_atoms(class, &params);
        sign * enumerated_ratio(&xs, &ys, rho)
    };
    let opts = NelderMeadOptions::default();
    let mut evals = 0;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for u in ShiftedHalton::new(dim, seed).take(RATIO_RESTARTS) {
        let x0: Vec<f64> = u.iter().map(|v| START_BOX * (2.0 * v - 1.0)).collect();
        let r = nelder_mead(objective, &x0, &opts);
        evals += r.evals;
        if best.as_ref().is_none_or(|(v, _)| r.value < *v) {
            best = Some((r.value, r.x));
        }
    }
    let (_, start) = best.expect("at least one restart");
    let polish = nelder_mead(
        objective,
        &start,
        &NelderMeadOptions {
            initial_step: 0.05,
            ..opts
        },
    );
    evals += polish.evals;
    let logs = polish.x;

    let params = params_from_logs(&logs);
    let witness = two_point_pair(class, &params);
    let ratio = moment_ratio(&witness.d1, &witness.d2, rho).expect("two-point laws are nonzero");
    let psi_crosscheck = match regime {
        Regime::PsiMin => Some(psi_extremum(rho, Extremum::Min)?),
        Regime::PsiMax => Some(psi_extremum(rho, Extremum::Max)?),
        _ => None,
    };
    let gap_to_target = (ratio - target).abs();
    Ok(SharpnessReport {
        rho,
        var_class: class,
        which,
        target,
        regime,
        ratio,
        gap_to_target,
        attained: gap_to_target <= SHARPNESS_TOL,
        witness,
        params,
        restarts: RATIO_RESTARTS,
        evals,
        psi_crosscheck,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HCheck {
    pub rho: f64,
    pub z_max: f64,
    pub grid_points: usize,
    pub h_at_one: f64,
    pub min_h: f64,
    /// Largest decrease between adjacent grid points.
    pub max_decrease: f64,
    pub worst_violation: f64,
    pub holds: bool,
}

pub const H_GRID: usize = 10_000;
const H_TOL: f64 = 1e-12;

/// `h(z) = (1+z)^rho + (z-1)^rho - 2^(rho-1) - 2^(rho-1) z^rho`.
pub fn h_function(rho: f64, z: f64) -> f64 {
    let c = (rho - 1.0).exp2();
    (1.0 + z).powf(rho) + (z - 1.0).powf(rho) - c - c * z.powf(rho)
}

/// `h >= 0`, `h(1) = 0` and `h` nondecreasing on 10^4 points of `[1, z_max]`.
pub fn h_nonneg_check(rho: f64, z_max: f64) -> Result<HCheck> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::param("rho", format!("must lie in (0, 1), got {rho}")));
    }
    if !(z_max.is_finite() && z_max > 1.0) {
        return Err(Error::param("z_max", format!("must exceed 1, got {z_max}")));
    }
    let step = (z_max - 1.0) / (H_GRID - 1) as f64;
    let values: Vec<f64> = (0..H_GRID).map(|i| h_function(rho, 1.0 + i as f64 * step)).collect();
    let min_h = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max_decrease = values.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
    let h_at_one = values[0];
    let worst_violation = (-min_h).max(h_at_one.abs()).max(max_decrease).max(0.0);
    Ok(HCheck {
        rho,
        z_max,
        grid_points: H_GRID,
        h_at_one,
        min_h,
        max_decrease,
        worst_violation,
        holds: min_h >= -H_TOL && h_at_one.abs() <= H_TOL && max_decrease <= H_TOL,
    })
}
