//! Sharp constants `A`, `B` in
//! `A (E|X|^rho + E|Y|^rho) <= E|X+Y|^rho <= B (E|X|^rho + E|Y|^rho)`
//! for independent centered or symmetric `X`, `Y`.
//!
//! Centered variables:
//!
//! | rho        | lower              | upper              |
//! |------------|--------------------|--------------------|
//! | `[1, 2]`   | `2^(rho-2)`        | `max_z psi(rho,z)` |
//! | `[2, 3]`   | `min_z psi(rho,z)` | `2^(rho-2)`        |
//! | `>= 3`     | `1`                | `2^(rho-2)`        |
//!
//! Symmetric variables: `(2^(rho-2), 1)` on `(0, 2]` and `(1, 2^(rho-2))`
//! from 2 on.
//!
//! `psi(rho, z)` is the moment ratio of an i.i.d. pair of centered two-point
//! variables with atoms `{-1, z}` (equivalently `{-z, 1}`), so the psi
//! regimes are attained by two-point pairs.

use serde::{Deserialize, Serialize};

use crate::distributions::FiniteDistribution;
use crate::error::{Error, Result};
use crate::optim::grid_golden_min;
use crate::verifier::{moment_ratio, ratio_extremize, SharpnessReport};

/// Largest supported exponent.
pub const MAX_RHO: f64 = 64.0;
/// Grid size of the psi scan before golden-section refinement.
pub const PSI_GRID: usize = 1001;
/// Target accuracy of the psi argmin/argmax.
pub const PSI_XTOL: f64 = 1e-10;
/// Allowed disagreement of adjacent regimes at a boundary exponent.
pub const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarClass {
    Centered,
    Symmetric,
}

impl VarClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            VarClass::Centered => "centered",
            VarClass::Symmetric => "symmetric",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    PowerTwoRhoMinus2,
    One,
    PsiMin,
    PsiMax,
    /// Trivial lower bound 0 for centered variables with `rho < 1`.
    Zero,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::PowerTwoRhoMinus2 => "PowerTwoRhoMinus2",
            Regime::One => "One",
            Regime::PsiMin => "PsiMin",
            Regime::PsiMax => "PsiMax",
            Regime::Zero => "Zero",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extremum {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Lower,
    Upper,
}

impl Side {
    pub fn extremum(self) -> Extremum {
        match self {
            Side::Lower => Extremum::Min,
            Side::Upper => Extremum::Max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiPoint {
    pub rho: f64,
    pub z: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub rho: f64,
    pub var_class: VarClass,
    pub lower: f64,
    pub upper: f64,
    pub lower_regime: Regime,
    pub upper_regime: Regime,
    /// Optimal `z` of the psi regime, when one applies.
    pub psi_argopt: Option<f64>,
}

impl BoundsReport {
    pub fn constant(&self, side: Side) -> (f64, Regime) {
        match side {
            Side::Lower => (self.lower, self.lower_regime),
            Side::Upper => (self.upper, self.upper_regime),
        }
    }
}

fn check_rho(rho: f64, min: f64, inclusive: bool) -> Result<()> {
    let ok_low = if inclusive { rho >= min } else { rho > min };
    if !(rho.is_finite() && ok_low) {
        return Err(Error::param(
            "rho",
            format!("must be {} {min}, got {rho}", if inclusive { ">=" } else { ">" }),
        ));
    }
    if rho > MAX_RHO {
        return Err(Error::param("rho", format!("must be at most {MAX_RHO}, got {rho}")));
    }
    Ok(())
}

/// `2^(rho-2)`.
pub fn power_two(rho: f64) -> f64 {
    (rho - 2.0).exp2()
}

/// `psi(rho, z) = (2^(rho-1) (z + z^(rho-1)) + (1-z)^rho) / ((1+z)(1+z^(rho-1)))`.
///
/// `z^(rho-1)` at `z = 0` is 1 for `rho = 1` and 0 otherwise.
pub fn psi(rho: f64, z: f64) -> Result<f64> {
    check_rho(rho, 1.0, true)?;
    if !(0.0..=1.0).contains(&z) {
        return Err(Error::param("z", format!("must lie in [0, 1], got {z}")));
    }
    Ok(psi_unchecked(rho, z))
}

pub(crate) fn psi_unchecked(rho: f64, z: f64) -> f64 {
    if rho == 2.0 {
        // numerator and denominator both equal (1+z)^2
        return 1.0;
    }
    let zr = if z == 0.0 {
        if rho == 1.0 {
            1.0
        } else {
            0.0
        }
    } else {
        z.powf(rho - 1.0)
    };
    ((rho - 1.0).exp2() * (z + zr) + (1.0 - z).powf(rho)) / ((1.0 + z) * (1.0 + zr))
}

/// Global extremum of `psi(rho, .)` over `[0, 1]`.
pub fn psi_extremum(rho: f64, which: Extremum) -> Result<PsiPoint> {
    check_rho(rho, 1.0, true)?;
    let sign = match which {
        Extremum::Min => 1.0,
        Extremum::Max => -1.0,
    };
    let best = grid_golden_min(|z| sign * psi_unchecked(rho, z), 0.0, 1.0, PSI_GRID, PSI_XTOL);
    Ok(PsiPoint {
        rho,
        z: best.x,
        value: psi_unchecked(rho, best.x),
    })
}

/// Regime index: 0 for `[1,2]`, 1 for `[2,3]`, 2 for `>= 3` (centered);
/// 0 for `(0,2]`, 1 for `>= 2` (symmetric). Boundary values belong to the
/// lower regime.
fn regime_index(rho: f64, class: VarClass) -> usize {
    match class {
        VarClass::Centered if rho <= 2.0 => 0,
        VarClass::Centered if rho <= 3.0 => 1,
        VarClass::Centered => 2,
        VarClass::Symmetric if rho <= 2.0 => 0,
        VarClass::Symmetric => 1,
    }
}

fn bounds_in_regime(rho: f64, class: VarClass, index: usize) -> Result<BoundsReport> {
    let report = |lower, lower_regime, upper, upper_regime, psi_argopt| BoundsReport {
        rho,
        var_class: class,
        lower,
        upper,
        lower_regime,
        upper_regime,
        psi_argopt,
    };
    Ok(match (class, index) {
        (VarClass::Centered, 0) => {
            let top = psi_extremum(rho, Extremum::Max)?;
            report(
                power_two(rho),
                Regime::PowerTwoRhoMinus2,
                top.value,
                Regime::PsiMax,
                Some(top.z),
            )
        }
        (VarClass::Centered, 1) => {
            let bottom = psi_extremum(rho, Extremum::Min)?;
            report(
                bottom.value,
                Regime::PsiMin,
                power_two(rho),
                Regime::PowerTwoRhoMinus2,
                Some(bottom.z),
            )
        }
        (VarClass::Centered, _) => report(1.0, Regime::One, power_two(rho), Regime::PowerTwoRhoMinus2, None),
        (VarClass::Symmetric, 0) => report(power_two(rho), Regime::PowerTwoRhoMinus2, 1.0, Regime::One, None),
        (VarClass::Symmetric, _) => report(1.0, Regime::One, power_two(rho), Regime::PowerTwoRhoMinus2, None),
    })
}

/// Sharp constants for `(rho, class)`. Centered variables need `rho >= 1`.
pub fn sharp_bounds(rho: f64, class: VarClass) -> Result<BoundsReport> {
    sharp_bounds_with(rho, class, false)
}

/// As [`sharp_bounds`]; with `allow_trivial`, centered `0 < rho < 1` yields
/// the trivial constants `(0, 1)`.
pub fn sharp_bounds_with(rho: f64, class: VarClass, allow_trivial: bool) -> Result<BoundsReport> {
    check_rho(rho, 0.0, false)?;
    if class == VarClass::Centered && rho < 1.0 {
        if !allow_trivial {
            return Err(Error::UnsupportedRegime(format!(
                "centered variables with rho = {rho} < 1 have only the trivial constants (0, 1)"
            )));
        }
        return Ok(BoundsReport {
            rho,
            var_class: class,
            lower: 0.0,
            upper: 1.0,
            lower_regime: Regime::Zero,
            upper_regime: Regime::One,
            psi_argopt: None,
        });
    }
    bounds_in_regime(rho, class, regime_index(rho, class))
}

/// At a regime boundary (`rho = 2`, or `rho = 3` for centered variables),
/// the largest difference between the constants of the two adjacent
/// regimes. `None` off the boundaries.
pub fn boundary_disagreement(rho: f64, class: VarClass) -> Result<Option<f64>> {
    let is_boundary = rho == 2.0 || (class == VarClass::Centered && rho == 3.0);
    if !is_boundary {
        return Ok(None);
    }
    let index = regime_index(rho, class);
    let here = bounds_in_regime(rho, class, index)?;
    let next = bounds_in_regime(rho, class, index + 1)?;
    Ok(Some(
        (here.lower - next.lower).abs().max((here.upper - next.upper).abs()),
    ))
}

/// A pair attaining (or approaching) a sharp constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqualityWitness {
    pub rho: f64,
    pub var_class: VarClass,
    pub side: Side,
    pub target: f64,
    pub regime: Regime,
    pub ratio: f64,
    pub attained: bool,
    pub d1: FiniteDistribution,
    pub d2: FiniteDistribution,
    /// Present when the witness came from the ratio optimizer.
    pub search: Option<SharpnessReport>,
}

/// Witness pair for one side of the sharp bounds: the i.i.d. Rademacher pair
/// for every `2^(rho-2)` constant, the ratio optimizer otherwise.
pub fn equality_witness(rho: f64, class: VarClass, side: Side, seed: u64) -> Result<EqualityWitness> {
    let bounds = sharp_bounds(rho, class)?;
    let (target, regime) = bounds.constant(side);
    if regime == Regime::PowerTwoRhoMinus2 {
        let r = FiniteDistribution::rademacher();
        let ratio = moment_ratio(&r, &r, rho).expect("nonzero denominator");
        return Ok(EqualityWitness {
            rho,
            var_class: class,
            side,
            target,
            regime,
            ratio,
            attained: (ratio - target).abs() <= crate::verifier::SHARPNESS_TOL,
            d1: r.clone(),
            d2: r,
            search: None,
        });
    }
    let search = ratio_extremize(rho, class, side.extremum(), seed)?;
    Ok(EqualityWitness {
        rho,
        var_class: class,
        side,
        target,
        regime,
        ratio: search.ratio,
        attained: search.attained,
        d1: search.witness.d1.clone(),
        d2: search.witness.d2.clone(),
        search: Some(search),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_at_one_is_power_two() {
        for rho in [1.0, 1.5, 2.0, 2.5, 3.0] {
            assert!((psi(rho, 1.0).unwrap() - power_two(rho)).abs() < 1e-15);
        }
    }

    #[test]
    fn psi_at_rho_one_is_reciprocal() {
        assert_eq!(psi(1.0, 0.0).unwrap(), 1.0);
        assert!((psi(1.0, 0.5).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        for z in [0.1, 0.37, 0.9] {
            assert!((psi(1.0, z).unwrap() - 1.0 / (1.0 + z)).abs() < 1e-15);
        }
    }

    #[test]
    fn psi_at_rho_two_is_one() {
        for i in 0..=20 {
            let z = i as f64 / 20.0;
            assert!((psi(2.0, z).unwrap() - 1.0).abs() < 1e-15, "z={z}");
        }
    }

    #[test]
    fn psi_rejects_out_of_range() {
        assert!(psi(0.5, 0.5).is_err());
        assert!(psi(2.0, 1.5).is_err());
        assert!(psi(2.0, -0.1).is_err());
        assert!(psi(65.0, 0.5).is_err());
    }

    #[test]
    fn psi_extremum_examples() {
        let top = psi_extremum(1.0, Extremum::Max).unwrap();
        assert_eq!(top.z, 0.0);
        assert_eq!(top.value, 1.0);

        let lo = psi_extremum(2.0, Extremum::Min).unwrap();
        let hi = psi_extremum(2.0, Extremum::Max).unwrap();
        assert!((lo.value - 1.0).abs() < 1e-15 && (hi.value - 1.0).abs() < 1e-15);

        let m = psi_extremum(2.5, Extremum::Min).unwrap();
        for i in 0..PSI_GRID {
            let z = i as f64 / (PSI_GRID - 1) as f64;
            assert!(m.value <= psi(2.5, z).unwrap());
        }
    }

    #[test]
    fn sharp_bounds_examples() {
        let b = sharp_bounds(3.0, VarClass::Centered).unwrap();
        assert!((b.lower - 1.0).abs() < 1e-9 && (b.upper - 2.0).abs() < 1e-15);

        let b = sharp_bounds(1.0, VarClass::Centered).unwrap();
        assert_eq!((b.lower, b.upper), (0.5, 1.0));

        let b = sharp_bounds(0.5, VarClass::Symmetric).unwrap();
        assert!((b.lower - 0.353_553_390_593_273_8).abs() < 1e-15);
        assert_eq!(b.upper, 1.0);
    }

    #[test]
    fn centered_below_one_needs_opt_in() {
        assert!(matches!(
            sharp_bounds(0.5, VarClass::Centered),
            Err(Error::UnsupportedRegime(_))
        ));
        let b = sharp_bounds_with(0.5, VarClass::Centered, true).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 1.0));
        assert_eq!(b.lower_regime, Regime::Zero);
    }

    #[test]
    fn boundaries_agree() {
        for (rho, class) in [
            (2.0, VarClass::Centered),
            (3.0, VarClass::Centered),
            (2.0, VarClass::Symmetric),
        ] {
            let gap = boundary_disagreement(rho, class).unwrap().unwrap();
            assert!(gap <= BOUNDARY_TOL, "rho={rho} {class:?}: {gap}");
        }
        assert_eq!(boundary_disagreement(2.5, VarClass::Centered).unwrap(), None);
    }

    #[test]
    fn rho_range_limit() {
        assert!(sharp_bounds(64.0, VarClass::Centered).is_ok());
        assert!(sharp_bounds(64.5, VarClass::Centered).is_err());
        assert!(sharp_bounds(0.0, VarClass::Symmetric).is_err());
    }

    #[test]
    fn upper_strictly_increasing_past_three() {
        let mut prev = sharp_bounds(3.0, VarClass::Centered).unwrap().upper;
        for k in 1..40 {
            let rho = 3.0 + k as f64 * 0.25;
            let up = sharp_bounds(rho, VarClass::Centered).unwrap().upper;
            assert!(up > prev);
            prev = up;
        }
    }

    #[test]
    fn rademacher_witness_for_power_two() {
        let w = equality_witness(3.0, VarClass::Centered, Side::Upper, 0).unwrap();
        assert!(w.attained && w.search.is_none());
        assert!((w.ratio - 2.0).abs() < 1e-15);
    }
}
