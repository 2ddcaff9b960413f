//! Test functions `f` together with their first two derivatives.
//!
//! A [`FunctionSpec`] always carries an evaluator for `f`. Analytic `f'`
//! and `f''` are optional; when absent, central finite differences with step
//! `h(y) = 1e-4 * max(1, |y|)` stand in.

use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type KinkFn = Arc<dyn Fn(f64, f64) -> bool + Send + Sync>;

/// Default relative finite-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-4;
/// Neighborhood skipped around declared kinks.
pub const KINK_EPS: f64 = 1e-6;

const SPOT_CHECK_POINTS: usize = 32;
const SPOT_CHECK_REL_TOL: f64 = 1e-3;

/// Points where `f''` is undefined.
#[derive(Clone, Default)]
pub enum Kinks {
    #[default]
    None,
    Points(Vec<f64>),
    /// `(y, eps) -> true` when `y` is within `eps` of a kink.
    Predicate(KinkFn),
}

impl Kinks {
    pub fn near(&self, y: f64, eps: f64) -> bool {
        match self {
            Kinks::None => false,
            Kinks::Points(pts) => pts.iter().any(|k| (y - k).abs() <= eps),
            Kinks::Predicate(p) => p(y, eps),
        }
    }
}

#[derive(Clone)]
pub struct FunctionSpec {
    label: String,
    f: RealFn,
    d1: Option<RealFn>,
    d2: Option<RealFn>,
    kinks: Kinks,
    /// Points where `f''` is continuous but not smooth.
    breaks: Vec<f64>,
    fd_rel_step: f64,
}

impl fmt::Debug for FunctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionSpec")
            .field("label", &self.label)
            .field("analytic_d1", &self.d1.is_some())
            .field("analytic_d2", &self.d2.is_some())
            .field("fd_rel_step", &self.fd_rel_step)
            .finish()
    }
}

/// A point where an analytic derivative disagrees with finite differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeMismatch {
    pub order: u8,
    pub at: f64,
    pub analytic: f64,
    pub finite_difference: f64,
}

impl FunctionSpec {
    pub fn new(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        FunctionSpec {
            label: label.into(),
            f: Arc::new(f),
            d1: None,
            d2: None,
            kinks: Kinks::None,
            breaks: Vec::new(),
            fd_rel_step: DEFAULT_FD_STEP,
        }
    }

    pub fn with_d1(mut self, d1: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.d1 = Some(Arc::new(d1));
        self
    }

    pub fn with_d2(mut self, d2: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.d2 = Some(Arc::new(d2));
        self
    }

    pub fn with_kinks(mut self, points: Vec<f64>) -> Self {
        self.kinks = Kinks::Points(points);
        self
    }

    pub fn with_kink_predicate(mut self, near: impl Fn(f64, f64) -> bool + Send + Sync + 'static) -> Self {
        self.kinks = Kinks::Predicate(Arc::new(near));
        self
    }

    pub fn with_breaks(mut self, points: Vec<f64>) -> Self {
        self.breaks = points;
        self
    }

    pub fn with_fd_step(mut self, rel: f64) -> Self {
        self.fd_rel_step = rel;
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn has_analytic_d1(&self) -> bool {
        self.d1.is_some()
    }

    pub fn has_analytic_d2(&self) -> bool {
        self.d2.is_some()
    }

    pub fn kinks(&self) -> &Kinks {
        &self.kinks
    }

    pub fn near_kink(&self, y: f64, eps: f64) -> bool {
        self.kinks.near(y, eps)
    }

    /// Listed kinks and breaks strictly inside `(lo, hi)`, sorted. Integrals
    /// of `f''` should be split at these points.
    pub fn breakpoints_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        let listed = match &self.kinks {
            Kinks::Points(pts) => pts.as_slice(),
            _ => &[],
        };
        let mut out: Vec<f64> = listed
            .iter()
            .chain(&self.breaks)
            .copied()
            .filter(|&b| b > lo && b < hi)
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    pub fn fd_step(&self, y: f64) -> f64 {
        self.fd_rel_step * y.abs().max(1.0)
    }

    /// Raw evaluation, no finiteness check.
    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        (self.f)(y)
    }

    fn checked(&self, v: f64, at: f64) -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::EvaluatorFailure {
                label: self.label.clone(),
                at,
            })
        }
    }

    pub fn value(&self, y: f64) -> Result<f64> {
        self.checked(self.eval(y), y)
    }

    pub fn fd_d1(&self, y: f64) -> f64 {
        let h = self.fd_step(y);
        (self.eval(y + h) - self.eval(y - h)) / (2.0 * h)
    }

    pub fn fd_d2(&self, y: f64) -> f64 {
        let h = self.fd_step(y);
        (self.eval(y + h) - 2.0 * self.eval(y) + self.eval(y - h)) / (h * h)
    }

    pub fn d1_raw(&self, y: f64) -> f64 {
        match &self.d1 {
            Some(d) => d(y),
            None => self.fd_d1(y),
        }
    }

    pub fn d2_raw(&self, y: f64) -> f64 {
        match &self.d2 {
            Some(d) => d(y),
            None => self.fd_d2(y),
        }
    }

    pub fn d1(&self, y: f64) -> Result<f64> {
        self.checked(self.d1_raw(y), y)
    }

    pub fn d2(&self, y: f64) -> Result<f64> {
        self.checked(self.d2_raw(y), y)
    }

    /// Compares analytic derivatives against finite differences at 32 random
    /// points of `[lo, hi]`, skipping neighborhoods of declared kinks.
    pub fn spot_check_derivatives(&self, seed: u64, lo: f64, hi: f64) -> Vec<DerivativeMismatch> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for _ in 0..SPOT_CHECK_POINTS {
            let y = rng.random_range(lo..hi);
            let skip = 2.0 * self.fd_step(y) + KINK_EPS;
            if self.near_kink(y, skip) {
                continue;
            }
            let checks = [
                (1u8, self.d1.as_ref(), self.fd_d1(y)),
                (2u8, self.d2.as_ref(), self.fd_d2(y)),
            ];
            for (order, analytic, fd) in checks {
                let Some(d) = analytic else { continue };
                let a = d(y);
                if !(a.is_finite() && fd.is_finite()) {
                    continue;
                }
                if (a - fd).abs() > SPOT_CHECK_REL_TOL * a.abs().max(1.0) {
                    out.push(DerivativeMismatch {
                        order,
                        at: y,
                        analytic: a,
                        finite_difference: fd,
                    });
                }
            }
        }
        out
    }

    /// `y -> f(lambda * y)`, with derivatives rescaled accordingly.
    pub fn scaled_argument(&self, lambda: f64) -> FunctionSpec {
        let f = self.f.clone();
        let mut out = FunctionSpec::new(format!("{}@{}y", self.label, lambda), move |y| f(lambda * y));
        if let Some(d1) = self.d1.clone() {
            out = out.with_d1(move |y| lambda * d1(lambda * y));
        }
        if let Some(d2) = self.d2.clone() {
            out = out.with_d2(move |y| lambda * lambda * d2(lambda * y));
        }
        let kinks = self.kinks.clone();
        out.with_kink_predicate(move |y, eps| kinks.near(lambda * y, eps * lambda.abs()))
            .with_breaks(self.breaks.iter().map(|b| b / lambda).collect())
            .with_fd_step(self.fd_rel_step)
    }

    /// `|y|^rho`.
    pub fn abs_pow(rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::param("rho", format!("must be positive, got {rho}")));
        }
        let spec = FunctionSpec::new(
            format!("abs_pow:{rho}"),
            move |y: f64| {
                if y == 0.0 {
                    0.0
                } else {
                    y.abs().powf(rho)
                }
            },
        )
        .with_d1(move |y| abs_pow_d1(rho, y))
        .with_d2(move |y| abs_pow_d2(rho, y))
        .with_breaks(power_breaks(rho));
        Ok(if rho < 2.0 { spec.with_kinks(vec![0.0]) } else { spec })
    }

    /// `-|y|^rho`.
    pub fn neg_abs_pow(rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::param("rho", format!("must be positive, got {rho}")));
        }
        let spec = FunctionSpec::new(format!("neg_abs_pow:{rho}"), move |y: f64| {
            if y == 0.0 {
                0.0
            } else {
                -y.abs().powf(rho)
            }
        })
        .with_d1(move |y| -abs_pow_d1(rho, y))
        .with_d2(move |y| -abs_pow_d2(rho, y))
        .with_breaks(power_breaks(rho));
        Ok(if rho < 2.0 { spec.with_kinks(vec![0.0]) } else { spec })
    }

    /// `c0 + c1 y + c2 y^2 + ...`.
    pub fn poly(coeffs: Vec<f64>) -> Self {
        let label = format!(
            "poly:{}",
            coeffs.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
        );
        let d1c: Vec<f64> = coeffs.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect();
        let d2c: Vec<f64> = d1c.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect();
        FunctionSpec::new(label, move |y| horner(&coeffs, y))
            .with_d1(move |y| horner(&d1c, y))
            .with_d2(move |y| horner(&d2c, y))
    }

    /// `f'' = floor(y^2)`, `f(0) = f'(0) = 0`.
    pub fn floor_convex() -> Self {
        FunctionSpec::new("floor_convex", floor_convex_f)
            .with_d1(floor_convex_d1)
            .with_d2(|y| (y * y).floor())
            .with_kink_predicate(|y, eps| {
                let k = (y * y).round();
                k >= 1.0 && (y.abs() - k.sqrt()).abs() <= eps
            })
    }

    /// `f'' = -y` for `y < 1` and `floor(y) - (y - floor(y))` for `y >= 1`,
    /// `f(0) = f'(0) = 0`.
    pub fn sawtooth() -> Self {
        FunctionSpec::new("sawtooth", sawtooth_f)
            .with_d1(sawtooth_d1)
            .with_d2(|y| if y < 1.0 { -y } else { 2.0 * y.floor() - y })
            .with_kink_predicate(|y, eps| {
                let n = y.round();
                n >= 1.0 && (y - n).abs() <= eps
            })
    }

    /// Piecewise-linear interpolation of a `(y, f(y))` table. Derivatives come
    /// from divided differences on the nodes; evaluation outside the table
    /// range fails.
    pub fn from_table(label: impl Into<String>, mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::param("table", "at least 3 points are required"));
        }
        if points.iter().any(|(y, v)| !(y.is_finite() && v.is_finite())) {
            return Err(Error::param("table", "all entries must be finite"));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::param("table", "abscissae must be distinct"));
        }
        let pts: Arc<Vec<(f64, f64)>> = Arc::new(points);
        let (p0, p1, p2) = (pts.clone(), pts.clone(), pts.clone());
        Ok(FunctionSpec::new(label, move |y| table_value(&p0, y))
            .with_d1(move |y| table_slope(&p1, y))
            .with_d2(move |y| table_curvature(&p2, y)))
    }

    /// Parses `name` or `name:params`, e.g. `abs_pow:2.5`, `poly:0,0,1`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (name, params) = match spec.split_once(':') {
            Some((n, p)) => (n.trim(), Some(p.trim())),
            None => (spec.trim(), None),
        };
        let number = |p: Option<&str>| -> Result<f64> {
            p.ok_or_else(|| Error::UnknownFunction(format!("{spec} (missing parameter)")))?
                .parse::<f64>()
                .map_err(|_| Error::UnknownFunction(format!("{spec} (bad parameter)")))
        };
        match name {
            "abs_pow" => Self::abs_pow(number(params)?),
            "neg_abs_pow" => Self::neg_abs_pow(number(params)?),
            "poly" => {
                let coeffs = params
                    .ok_or_else(|| Error::UnknownFunction(format!("{spec} (missing coefficients)")))?
                    .split(',')
                    .map(|c| c.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::UnknownFunction(format!("{spec} (bad coefficient)")))?;
                Ok(Self::poly(coeffs))
            }
            "floor_convex" if params.is_none() => Ok(Self::floor_convex()),
            "sawtooth" if params.is_none() => Ok(Self::sawtooth()),
            _ => Err(Error::UnknownFunction(spec.to_string())),
        }
    }
}

/// The built-in function library.
pub fn library() -> Vec<FunctionSpec> {
    let mut out = Vec::new();
    for rho in [1.2, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0] {
        out.push(FunctionSpec::abs_pow(rho).expect("valid rho"));
    }
    for rho in [1.2, 1.5, 1.8] {
        out.push(FunctionSpec::neg_abs_pow(rho).expect("valid rho"));
    }
    out.extend(poly_library());
    out.push(FunctionSpec::floor_convex());
    out.push(FunctionSpec::sawtooth());
    out
}

fn poly_library() -> Vec<FunctionSpec> {
    vec![
        FunctionSpec::poly(vec![0.0, 0.0, 1.0]),
        FunctionSpec::poly(vec![0.0, 0.0, 0.0, 1.0]),
        FunctionSpec::poly(vec![0.0, 0.0, 0.0, 0.0, 1.0]),
        FunctionSpec::poly(vec![0.0, 0.0, 1.0, 1.0, 1.0]),
    ]
}

/// Members of the library with continuous `f''`.
pub fn smooth_library() -> Vec<FunctionSpec> {
    let mut out = poly_library();
    for rho in [2.0, 3.0, 4.0] {
        out.push(FunctionSpec::abs_pow(rho).expect("valid rho"));
    }
    out
}

fn power_breaks(rho: f64) -> Vec<f64> {
    if rho.fract() == 0.0 && (rho as u64).is_multiple_of(2) {
        Vec::new()
    } else {
        vec![0.0]
    }
}

fn horner(coeffs: &[f64], y: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * y + c)
}

fn abs_pow_d1(rho: f64, y: f64) -> f64 {
    if y == 0.0 {
        return if rho > 1.0 { 0.0 } else { f64::NAN };
    }
    rho * y.abs().powf(rho - 1.0) * y.signum()
}

fn abs_pow_d2(rho: f64, y: f64) -> f64 {
    if y == 0.0 {
        return if rho > 2.0 {
            0.0
        } else if rho == 2.0 {
            2.0
        } else {
            f64::NAN
        };
    }
    rho * (rho - 1.0) * y.abs().powf(rho - 2.0)
}

const SQRT_PREFIX_LEN: usize = 1 << 20;

/// `sum_{j=1}^{m} sqrt(j)`.
fn sqrt_prefix_sum(m: u64) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    if (m as usize) < SQRT_PREFIX_LEN {
        let table = TABLE.get_or_init(|| {
            let mut t = Vec::with_capacity(SQRT_PREFIX_LEN);
            let (mut sum, mut comp) = (0.0f64, 0.0f64);
            t.push(0.0);
            for j in 1..SQRT_PREFIX_LEN {
                // Kahan summation
                let term = (j as f64).sqrt() - comp;
                let next = sum + term;
                comp = (next - sum) - term;
                sum = next;
                t.push(sum);
            }
            t
        });
        table[m as usize]
    } else {
        (1..=m).map(|j| (j as f64).sqrt()).sum()
    }
}

/// `int_0^{sqrt K} floor(t^2) dt = (K-1) sqrt(K) - sum_{j<K} sqrt(j)`.
fn floor_convex_slope_at_node(k: u64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    (k - 1) as f64 * (k as f64).sqrt() - sqrt_prefix_sum(k - 1)
}

fn floor_convex_f(y: f64) -> f64 {
    let y = y.abs();
    let k = (y * y).floor() as u64;
    if k == 0 {
        return 0.0;
    }
    let kf = k as f64;
    let r = y - kf.sqrt();
    y * floor_convex_slope_at_node(k) - kf * (kf - 1.0) / 4.0 + 0.5 * kf * r * r
}

fn floor_convex_d1(y: f64) -> f64 {
    let s = y.signum();
    let y = y.abs();
    let k = (y * y).floor() as u64;
    let kf = k as f64;
    s * (floor_convex_slope_at_node(k) + kf * (y - kf.sqrt()))
}

fn sawtooth_f(y: f64) -> f64 {
    let cubic = -y * y * y / 6.0;
    if y < 1.0 {
        return cubic;
    }
    let n = y.floor();
    let s1 = n * (n - 1.0) / 2.0;
    let s2 = (n - 1.0) * n * (2.0 * n - 1.0) / 6.0;
    let r = y - n;
    cubic + 2.0 * ((2.0 * y - 1.0) / 2.0 * s1 - s2 + 0.5 * n * r * r)
}

fn sawtooth_d1(y: f64) -> f64 {
    let quad = -y * y / 2.0;
    if y < 1.0 {
        return quad;
    }
    let n = y.floor();
    quad + 2.0 * (n * (n - 1.0) / 2.0 + n * (y - n))
}

fn table_segment(pts: &[(f64, f64)], y: f64) -> Option<usize> {
    let (first, last) = (pts[0].0, pts[pts.len() - 1].0);
    if !(y >= first && y <= last) {
        return None;
    }
    let i = pts.partition_point(|p| p.0 <= y);
    Some(i.clamp(1, pts.len() - 1) - 1)
}

fn table_value(pts: &[(f64, f64)], y: f64) -> f64 {
    match table_segment(pts, y) {
        Some(i) => {
            let ((y0, f0), (y1, f1)) = (pts[i], pts[i + 1]);
            f0 + (f1 - f0) * (y - y0) / (y1 - y0)
        }
        None => f64::NAN,
    }
}

fn table_slope(pts: &[(f64, f64)], y: f64) -> f64 {
    match table_segment(pts, y) {
        Some(i) => (pts[i + 1].1 - pts[i].1) / (pts[i + 1].0 - pts[i].0),
        None => f64::NAN,
    }
}

fn table_curvature(pts: &[(f64, f64)], y: f64) -> f64 {
    let Some(seg) = table_segment(pts, y) else {
        return f64::NAN;
    };
    // nearest node, kept interior so the three-point stencil exists
    let node = if y - pts[seg].0 <= pts[seg + 1].0 - y {
        seg
    } else {
        seg + 1
    };
    let i = node.clamp(1, pts.len() - 2);
    let (ym, fm) = pts[i - 1];
    let (y0, f0) = pts[i];
    let (yp, fp) = pts[i + 1];
    2.0 * ((fp - f0) / (yp - y0) - (f0 - fm) / (y0 - ym)) / (yp - ym)
}
