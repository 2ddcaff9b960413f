//! Finite-support probability distributions with exact moment and
//! convolution arithmetic.
//!
//! Every law handled by the toolkit is a [`FiniteDistribution`]: a sorted
//! list of distinct atoms with strictly positive probabilities summing to one.
//! Expectations are finite sums, so there is no sampling anywhere.

use std::cmp::Ordering;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function::FunctionSpec;

/// Tolerance on the total probability mass.
pub const MASS_TOL: f64 = 1e-12;
/// Relative distance below which two atoms are merged.
pub const MERGE_TOL: f64 = 1e-12;
/// Relative tolerance for accepting a distribution as centered.
pub const CENTERING_TOL: f64 = 1e-9;
/// Tolerance on mirrored probabilities for symmetric laws.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Smallest magnitude of a nonzero atom emitted by the random generators.
const GEN_MIN_MAGNITUDE: f64 = 1e-2;
const GEN_MAX_MAGNITUDE: f64 = 1e2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: f64,
    pub p: f64,
}

impl Atom {
    pub fn new(x: f64, p: f64) -> Self {
        Atom { x, p }
    }
}

/// A probability law with finitely many atoms.
///
/// Atoms are sorted ascending by value, pairwise distinct (atoms closer than
/// `1e-12 * max(1, |x|)` are merged) and carry strictly positive mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution")]
pub struct FiniteDistribution {
    atoms: Vec<Atom>,
}

#[derive(Deserialize)]
struct RawDistribution {
    atoms: Vec<Atom>,
}

impl TryFrom<RawDistribution> for FiniteDistribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        FiniteDistribution::new(raw.atoms)
    }
}

fn same_point(a: f64, b: f64) -> bool {
    (a - b).abs() <= MERGE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Sorts and merges coincident atoms; merged atoms sit at the mass-weighted
/// average of their values.
fn normalize_atoms(mut atoms: Vec<Atom>) -> Vec<Atom> {
    atoms.sort_by(|l, r| l.x.total_cmp(&r.x));
    let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
    for atom in atoms {
        match out.last_mut() {
            Some(last) if same_point(last.x, atom.x) => {
                let p = last.p + atom.p;
                if last.x != atom.x {
                    last.x = (last.x * last.p + atom.x * atom.p) / p;
                }
                last.p = p;
            }
            _ => out.push(atom),
        }
    }
    out
}

impl FiniteDistribution {
    /// Validates and normalizes a list of atoms.
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidDistribution {
                field: "atoms".into(),
                reason: "at least one atom is required".into(),
            });
        }
        for (i, atom) in atoms.iter().enumerate() {
            if !atom.x.is_finite() {
                return Err(Error::InvalidDistribution {
                    field: format!("atoms[{i}].x"),
                    reason: format!("value {} is not finite", atom.x),
                });
            }
            if !(atom.p.is_finite() && atom.p > 0.0 && atom.p <= 1.0 + MASS_TOL) {
                return Err(Error::InvalidDistribution {
                    field: format!("atoms[{i}].p"),
                    reason: format!("probability {} is not in (0, 1]", atom.p),
                });
            }
        }
        let total: f64 = atoms.iter().map(|a| a.p).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDistribution {
                field: "atoms[*].p".into(),
                reason: format!("probabilities sum to {total}, expected 1"),
            });
        }
        Ok(FiniteDistribution {
            atoms: normalize_atoms(atoms),
        })
    }

    /// Builds from `(x, p)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(x, p)| Atom::new(x, p)).collect())
    }

    /// Skips the mass check; for internal products of valid laws.
    pub(crate) fn from_atoms_unchecked(atoms: Vec<Atom>) -> Self {
        FiniteDistribution {
            atoms: normalize_atoms(atoms),
        }
    }

    pub fn point_mass(x: f64) -> Self {
        FiniteDistribution {
            atoms: vec![Atom::new(x, 1.0)],
        }
    }

    pub fn zero() -> Self {
        Self::point_mass(0.0)
    }

    /// Uniform law on `{-1, 1}`.
    pub fn rademacher() -> Self {
        FiniteDistribution {
            atoms: vec![Atom::new(-1.0, 0.5), Atom::new(1.0, 0.5)],
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.p).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.atoms.iter().map(|a| a.x.abs()).fold(0.0, f64::max)
    }

    /// Probability of the atom at `x` (0 if absent).
    pub fn prob_at(&self, x: f64) -> f64 {
        self.atoms.iter().find(|a| same_point(a.x, x)).map_or(0.0, |a| a.p)
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|a| a.x * a.p).sum()
    }

    /// `E|X|^rho`, with `|0|^rho = 0`.
    pub fn abs_moment(&self, rho: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|a| a.x != 0.0)
            .map(|a| a.x.abs().powf(rho) * a.p)
            .sum()
    }

    /// `E f(X)` for a plain closure.
    pub fn expect_with(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms.iter().map(|a| f(a.x) * a.p).sum()
    }

    /// `E f(X)`; fails if `f` is not finite at some atom.
    pub fn expectation(&self, f: &FunctionSpec) -> Result<f64> {
        let mut acc = 0.0;
        for a in &self.atoms {
            acc += f.value(a.x)? * a.p;
        }
        Ok(acc)
    }

    /// Law of `X + Y` for independent `X ~ self`, `Y ~ other`.
    pub fn convolve(&self, other: &FiniteDistribution) -> FiniteDistribution {
        let mut atoms = Vec::with_capacity(self.len() * other.len());
        for a in &self.atoms {
            for b in &other.atoms {
                atoms.push(Atom::new(a.x + b.x, a.p * b.p));
            }
        }
        Self::from_atoms_unchecked(atoms)
    }

    /// Law of `lambda * X`.
    pub fn scaled(&self, lambda: f64) -> FiniteDistribution {
        Self::from_atoms_unchecked(self.atoms.iter().map(|a| Atom::new(lambda * a.x, a.p)).collect())
    }

    /// Law of `-X`.
    pub fn negated(&self) -> FiniteDistribution {
        self.scaled(-1.0)
    }

    pub fn is_centered(&self) -> bool {
        self.mean().abs() <= CENTERING_TOL * (1.0 + self.max_abs())
    }

    pub fn check_centered(&self) -> Result<()> {
        if self.is_centered() {
            Ok(())
        } else {
            Err(Error::NotCentered { mean: self.mean() })
        }
    }

    /// Checks `P(x) = P(-x)` for every atom; reports the first mismatch.
    pub fn check_symmetric(&self) -> Result<()> {
        for a in &self.atoms {
            let mirror = self.prob_at(-a.x);
            if (mirror - a.p).abs() > SYMMETRY_TOL {
                return Err(Error::NotSymmetric {
                    x: a.x,
                    p: a.p,
                    p_mirror: mirror,
                });
            }
        }
        Ok(())
    }

    pub fn is_symmetric(&self) -> bool {
        self.check_symmetric().is_ok()
    }

    /// Total-variation distance: half the l1 distance between the mass
    /// functions, with atoms matched under the merge tolerance.
    pub fn tv_distance(&self, other: &FiniteDistribution) -> f64 {
        let (mut i, mut j) = (0, 0);
        let (l, r) = (&self.atoms, &other.atoms);
        let mut acc = 0.0;
        while i < l.len() || j < r.len() {
            match (l.get(i), r.get(j)) {
                (Some(a), Some(b)) if same_point(a.x, b.x) => {
                    acc += (a.p - b.p).abs();
                    i += 1;
                    j += 1;
                }
                (Some(a), Some(b)) => {
                    if a.x.total_cmp(&b.x) == Ordering::Less {
                        acc += a.p;
                        i += 1;
                    } else {
                        acc += b.p;
                        j += 1;
                    }
                }
                (Some(a), None) => {
                    acc += a.p;
                    i += 1;
                }
                (None, Some(b)) => {
                    acc += b.p;
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        0.5 * acc
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("distribution serializes")
    }

    /// Parses the `{"atoms":[{"x":..,"p":..}]}` format, validating every
    /// invariant. Diagnostics carry the line/column or the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Json(e.to_string()))
    }

    /// Random centered law with `n_atoms` atoms, deterministic in `seed`.
    pub fn random_centered(seed: u64, n_atoms: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_centered_with(&mut rng, n_atoms)
    }

    /// Random symmetric law with `n_atoms` atoms, deterministic in `seed`.
    pub fn random_symmetric(seed: u64, n_atoms: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_symmetric_with(&mut rng, n_atoms)
    }
}

impl fmt::Display for FiniteDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, a) in self.atoms.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "({}, {})", a.x, a.p)?;
        }
        write!(f, "}}")
    }
}

/// Support `{-a, b}` with `P(-a) = b/(a+b)`, `P(b) = a/(a+b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPointCentered {
    pub a: f64,
    pub b: f64,
}

impl TwoPointCentered {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::param("a", format!("must be positive, got {a}")));
        }
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::param("b", format!("must be positive, got {b}")));
        }
        Ok(TwoPointCentered { a, b })
    }

    pub fn prob_neg(&self) -> f64 {
        self.b / (self.a + self.b)
    }

    pub fn prob_pos(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    pub fn distribution(&self) -> FiniteDistribution {
        FiniteDistribution::from_atoms_unchecked(vec![
            Atom::new(-self.a, self.prob_neg()),
            Atom::new(self.b, self.prob_pos()),
        ])
    }
}

/// Support `{-a, a}` with equal weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPointSymmetric {
    pub a: f64,
}

impl TwoPointSymmetric {
    pub fn new(a: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::param("a", format!("must be positive, got {a}")));
        }
        Ok(TwoPointSymmetric { a })
    }

    pub fn distribution(&self) -> FiniteDistribution {
        FiniteDistribution::from_atoms_unchecked(vec![Atom::new(-self.a, 0.5), Atom::new(self.a, 0.5)])
    }
}

/// The centered two-point law on `{-a, b}`.
pub fn make_two_point_centered(a: f64, b: f64) -> Result<FiniteDistribution> {
    Ok(TwoPointCentered::new(a, b)?.distribution())
}

fn log_uniform_magnitude<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let (lo, hi) = (GEN_MIN_MAGNITUDE.ln(), GEN_MAX_MAGNITUDE.ln());
    rng.random_range(lo..hi).exp()
}

fn dirichlet_weights<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n)
        .map(|_| loop {
            let e: f64 = rng.sample(Exp1);
            if e > 0.0 {
                break e;
            }
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

fn in_forbidden_band(x: f64) -> bool {
    x != 0.0 && x.abs() < GEN_MIN_MAGNITUDE
}

/// Centered generator over a caller-supplied rng.
///
/// Atoms are log-uniform in magnitude on `[1e-2, 1e2]` with random signs and
/// Dirichlet(1) weights, then shifted by the mean. Draws that land an atom in
/// `(-1e-2, 1e-2) \ {0}` after the shift are rejected and redrawn.
pub fn random_centered_with<R: Rng + ?Sized>(rng: &mut R, n_atoms: usize) -> Result<FiniteDistribution> {
    if n_atoms < 2 {
        return Err(Error::param("n_atoms", "must be at least 2"));
    }
    loop {
        let weights = dirichlet_weights(rng, n_atoms);
        let xs: Vec<f64> = (0..n_atoms)
            .map(|_| {
                let m = log_uniform_magnitude(rng);
                if rng.random_bool(0.5) {
                    m
                } else {
                    -m
                }
            })
            .collect();
        let mean: f64 = xs.iter().zip(&weights).map(|(x, p)| x * p).sum();
        let atoms: Vec<Atom> = xs.iter().zip(&weights).map(|(&x, &p)| Atom::new(x - mean, p)).collect();
        if atoms.iter().any(|a| in_forbidden_band(a.x)) {
            continue;
        }
        let d = FiniteDistribution::from_atoms_unchecked(atoms);
        if d.len() >= 2 && d.mean().abs() <= 1e-12 {
            return Ok(d);
        }
    }
}

/// Symmetric generator over a caller-supplied rng.
///
/// Draws `n_atoms / 2` positive magnitudes and mirrors them with equal
/// weights; an odd `n_atoms` adds an atom at zero.
pub fn random_symmetric_with<R: Rng + ?Sized>(rng: &mut R, n_atoms: usize) -> Result<FiniteDistribution> {
    if n_atoms < 2 {
        return Err(Error::param("n_atoms", "must be at least 2"));
    }
    let half = n_atoms / 2;
    let with_zero = n_atoms % 2 == 1;
    let weights = dirichlet_weights(rng, half + usize::from(with_zero));
    let mut atoms = Vec::with_capacity(n_atoms);
    for w in weights.iter().take(half) {
        let x = log_uniform_magnitude(rng);
        let p = 0.5 * w;
        atoms.push(Atom::new(-x, p));
        atoms.push(Atom::new(x, p));
    }
    if with_zero {
        atoms.push(Atom::new(0.0, weights[half]));
    }
    Ok(FiniteDistribution::from_atoms_unchecked(atoms))
}

/// Random centered two-point law with log-uniform `a`, `b`.
pub fn random_two_point_centered_with<R: Rng + ?Sized>(rng: &mut R) -> TwoPointCentered {
    TwoPointCentered {
        a: log_uniform_magnitude(rng),
        b: log_uniform_magnitude(rng),
    }
}

/// Random symmetric two-point law with log-uniform `a`.
pub fn random_two_point_symmetric_with<R: Rng + ?Sized>(rng: &mut R) -> TwoPointSymmetric {
    TwoPointSymmetric {
        a: log_uniform_magnitude(rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(pairs: &[(f64, f64)]) -> FiniteDistribution {
        FiniteDistribution::from_pairs(pairs).unwrap()
    }

    fn assert_atoms(d: &FiniteDistribution, expected: &[(f64, f64)], tol: f64) {
        assert_eq!(d.len(), expected.len(), "{d}");
        for (a, &(x, p)) in d.atoms().iter().zip(expected) {
            assert!((a.x - x).abs() <= tol && (a.p - p).abs() <= tol, "{d}");
        }
    }

    #[test]
    fn two_point_centered_examples() {
        let d = make_two_point_centered(1.0, 1.0).unwrap();
        assert_atoms(&d, &[(-1.0, 0.5), (1.0, 0.5)], 0.0);
        let d = make_two_point_centered(2.0, 1.0).unwrap();
        assert_atoms(&d, &[(-2.0, 1.0 / 3.0), (1.0, 2.0 / 3.0)], 1e-15);
        let d = make_two_point_centered(1.0, 100.0).unwrap();
        assert!(d.mean().abs() <= 1e-14);
    }

    #[test]
    fn two_point_rejects_nonpositive() {
        assert!(matches!(
            make_two_point_centered(0.0, 1.0),
            Err(Error::InvalidParameter { name: "a", .. })
        ));
        assert!(matches!(
            make_two_point_centered(1.0, -2.0),
            Err(Error::InvalidParameter { name: "b", .. })
        ));
        assert!(TwoPointSymmetric::new(0.0).is_err());
    }

    #[test]
    fn mean_examples() {
        assert_eq!(FiniteDistribution::rademacher().mean(), 0.0);
        assert!(dist(&[(-2.0, 1.0 / 3.0), (1.0, 2.0 / 3.0)]).mean().abs() < 1e-15);
        assert_eq!(FiniteDistribution::zero().mean(), 0.0);
    }

    #[test]
    fn abs_moment_examples() {
        assert_eq!(FiniteDistribution::rademacher().abs_moment(3.0), 1.0);
        let d = dist(&[(-2.0, 1.0 / 3.0), (1.0, 2.0 / 3.0)]);
        assert!((d.abs_moment(2.0) - 2.0).abs() < 1e-15);
        let d = dist(&[(-2.0, 0.25), (0.0, 0.5), (2.0, 0.25)]);
        assert_eq!(d.abs_moment(1.0), 1.0);
        // |0|^rho = 0 even for tiny rho
        assert_eq!(FiniteDistribution::zero().abs_moment(1e-9), 0.0);
    }

    #[test]
    fn expectation_examples() {
        let sq = FunctionSpec::poly(vec![0.0, 0.0, 1.0]);
        assert_eq!(FiniteDistribution::rademacher().expectation(&sq).unwrap(), 1.0);
        let f = FunctionSpec::abs_pow(1.5).unwrap();
        assert_eq!(FiniteDistribution::zero().expectation(&f).unwrap(), 0.0);
        let q = FunctionSpec::poly(vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        let d = dist(&[(-2.0, 0.25), (0.0, 0.5), (2.0, 0.25)]);
        assert_eq!(d.expectation(&q).unwrap(), 8.0);
    }

    #[test]
    fn expectation_propagates_evaluator_failure() {
        let f = FunctionSpec::new("log", |y: f64| y.ln());
        let err = FiniteDistribution::rademacher().expectation(&f).unwrap_err();
        assert!(matches!(err, Error::EvaluatorFailure { at, .. } if at == -1.0));
    }

    #[test]
    fn convolve_examples() {
        let r = FiniteDistribution::rademacher();
        assert_atoms(&r.convolve(&r), &[(-2.0, 0.25), (0.0, 0.5), (2.0, 0.25)], 0.0);

        let d = dist(&[(-3.0, 0.2), (0.5, 0.3), (1.0, 0.5)]);
        assert_eq!(d.convolve(&FiniteDistribution::zero()), d);

        let t = dist(&[(-2.0, 1.0 / 3.0), (1.0, 2.0 / 3.0)]);
        assert_atoms(
            &t.convolve(&t),
            &[(-4.0, 1.0 / 9.0), (-1.0, 4.0 / 9.0), (2.0, 4.0 / 9.0)],
            1e-15,
        );
    }

    #[test]
    fn rejects_bad_atoms() {
        let err = FiniteDistribution::from_pairs(&[(0.0, 0.5), (1.0, -0.5)]).unwrap_err();
        assert!(matches!(err, Error::InvalidDistribution { ref field, .. } if field == "atoms[1].p"));
        let err = FiniteDistribution::from_pairs(&[(f64::NAN, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::InvalidDistribution { ref field, .. } if field == "atoms[0].x"));
        assert!(FiniteDistribution::from_pairs(&[(0.0, 0.5), (1.0, 0.4)]).is_err());
        assert!(FiniteDistribution::new(vec![]).is_err());
    }

    #[test]
    fn merges_near_duplicates() {
        let d = dist(&[(1.0, 0.25), (1.0 + 1e-14, 0.25), (-1.0, 0.5)]);
        assert_eq!(d.len(), 2);
        assert!((d.prob_at(1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip_and_diagnostics() {
        let d = dist(&[(-2.0, 0.25), (0.0, 0.25), (1.0, 0.5)]);
        let back = FiniteDistribution::from_json(&d.to_json()).unwrap();
        assert_eq!(back, d);

        let err = FiniteDistribution::from_json("{\"atoms\":[{\"x\":1,\"p\":0.5},\n{\"x\":2,\"p\":0}]}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("atoms[1].p"), "{msg}");

        let err = FiniteDistribution::from_json("{\"atoms\":[{\"x\":1}]}").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn generators_are_deterministic_and_well_formed() {
        for seed in 0..200 {
            let d = FiniteDistribution::random_centered(seed, 2 + (seed as usize % 19)).unwrap();
            assert!(d.mean().abs() <= 1e-12);
            assert!((d.total_mass() - 1.0).abs() <= 1e-12);
            assert!(d.atoms().iter().all(|a| !in_forbidden_band(a.x)));
            assert_eq!(
                d,
                FiniteDistribution::random_centered(seed, 2 + (seed as usize % 19)).unwrap()
            );

            let s = FiniteDistribution::random_symmetric(seed, 2 + (seed as usize % 11)).unwrap();
            for a in s.atoms() {
                assert_eq!(s.prob_at(-a.x), a.p);
            }
            assert_eq!(
                s,
                FiniteDistribution::random_symmetric(seed, 2 + (seed as usize % 11)).unwrap()
            );
        }
        assert!(FiniteDistribution::random_centered(1, 1).is_err());
    }

    #[test]
    fn symmetry_check_names_offending_atom() {
        let d = dist(&[(-1.0, 0.3), (1.0, 0.7)]);
        assert!(matches!(d.check_symmetric(), Err(Error::NotSymmetric { x, .. }) if x == -1.0));
    }

    #[test]
    fn tv_distance_basics() {
        let a = dist(&[(-1.0, 0.5), (1.0, 0.5)]);
        let b = dist(&[(-1.0, 0.25), (0.0, 0.5), (1.0, 0.25)]);
        assert!((a.tv_distance(&b) - 0.5).abs() < 1e-15);
        assert_eq!(a.tv_distance(&a), 0.0);
    }
}
