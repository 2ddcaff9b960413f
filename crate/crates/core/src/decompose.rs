//! Mixture decompositions of centered and symmetric finite laws.
//!
//! A centered law is written as a probability mixture of centered two-point
//! laws plus (possibly) a point mass at zero. Negative and positive atoms are
//! consumed in quantile order, smallest magnitude first, and each emitted
//! component takes equal first moment from both sides. That balance is what
//! keeps every component centered and lets the two sides run out together.

use serde::{Deserialize, Serialize};

use crate::distributions::{Atom, FiniteDistribution, TwoPointCentered, TwoPointSymmetric};
use crate::error::{Error, Result};

/// Residual mass below this is dropped at the end of the pairing walk.
pub const RESIDUAL_TOL: f64 = 1e-12;
/// Mid-walk slivers below this relative size are treated as exhausted.
const SLIVER_TOL: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Component {
    TwoPointCentered(TwoPointCentered),
    TwoPointSymmetric(TwoPointSymmetric),
    ZeroMass,
}

impl Component {
    pub fn distribution(&self) -> FiniteDistribution {
        match self {
            Component::TwoPointCentered(c) => c.distribution(),
            Component::TwoPointSymmetric(s) => s.distribution(),
            Component::ZeroMass => FiniteDistribution::zero(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedComponent {
    pub weight: f64,
    #[serde(flatten)]
    pub component: Component,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureDecomposition {
    pub components: Vec<WeightedComponent>,
    /// Mass dropped before renormalizing (float residue of the pairing).
    #[serde(default)]
    pub discarded_mass: f64,
}

impl MixtureDecomposition {
    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Weights positive and summing to one within `1e-12`.
    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.components.iter().enumerate() {
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(Error::InvalidDistribution {
                    field: format!("components[{i}].weight"),
                    reason: format!("weight {} is not positive", c.weight),
                });
            }
        }
        let total = self.total_weight();
        if (total - 1.0).abs() > RESIDUAL_TOL {
            return Err(Error::InvalidDistribution {
                field: "components[*].weight".into(),
                reason: format!("weights sum to {total}, expected 1"),
            });
        }
        Ok(())
    }
}

/// Upper bound on the component count of [`decompose_centered`].
pub fn component_bound(d: &FiniteDistribution) -> usize {
    let neg = d.atoms().iter().filter(|a| a.x < 0.0).count();
    let pos = d.atoms().iter().filter(|a| a.x > 0.0).count();
    let zero = usize::from(d.atoms().iter().any(|a| a.x == 0.0));
    (neg + pos).saturating_sub(1) + zero
}

/// Splits a centered law into centered two-point components and a zero mass.
pub fn decompose_centered(d: &FiniteDistribution) -> Result<MixtureDecomposition> {
    d.check_centered()?;

    let zero_weight: f64 = d.atoms().iter().filter(|a| a.x == 0.0).map(|a| a.p).sum();
    // (magnitude, remaining mass), smallest magnitude first
    let mut neg: Vec<(f64, f64)> = d
        .atoms()
        .iter()
        .rev()
        .filter(|a| a.x < 0.0)
        .map(|a| (-a.x, a.p))
        .collect();
    let mut pos: Vec<(f64, f64)> = d.atoms().iter().filter(|a| a.x > 0.0).map(|a| (a.x, a.p)).collect();

    let mut components = Vec::with_capacity(neg.len() + pos.len());
    if zero_weight > 0.0 {
        components.push(WeightedComponent {
            weight: zero_weight,
            component: Component::ZeroMass,
        });
    }

    let (mut i, mut j) = (0, 0);
    while i < neg.len() && j < pos.len() {
        let (a, neg_left) = neg[i];
        let (b, pos_left) = pos[j];
        // component weight w puts w*b/(a+b) on -a and w*a/(a+b) on b
        let by_neg = neg_left * (a + b) / b;
        let by_pos = pos_left * (a + b) / a;
        let w = by_neg.min(by_pos);
        components.push(WeightedComponent {
            weight: w,
            component: Component::TwoPointCentered(TwoPointCentered { a, b }),
        });
        if by_neg <= by_pos {
            neg[i].1 = 0.0;
            pos[j].1 = pos_left - w * a / (a + b);
        } else {
            pos[j].1 = 0.0;
            neg[i].1 = neg_left - w * b / (a + b);
        }
        if neg[i].1 <= SLIVER_TOL * neg_left {
            i += 1;
        }
        if pos[j].1 <= SLIVER_TOL * pos_left {
            j += 1;
        }
    }

    let residual: f64 = neg[i.min(neg.len())..].iter().map(|n| n.1).sum::<f64>()
        + pos[j.min(pos.len())..].iter().map(|p| p.1).sum::<f64>();
    let total: f64 = components.iter().map(|c| c.weight).sum();
    for c in &mut components {
        c.weight /= total;
    }
    Ok(MixtureDecomposition {
        components,
        discarded_mass: residual.max(0.0),
    })
}

/// Splits a symmetric law into symmetric two-point components and a zero
/// mass: weight `2 P(x)` on `{-x, x}` for each positive atom.
pub fn decompose_symmetric(d: &FiniteDistribution) -> Result<MixtureDecomposition> {
    d.check_symmetric()?;
    let mut components = Vec::new();
    for atom in d.atoms() {
        if atom.x == 0.0 {
            components.push(WeightedComponent {
                weight: atom.p,
                component: Component::ZeroMass,
            });
        } else if atom.x > 0.0 {
            components.push(WeightedComponent {
                weight: 2.0 * atom.p,
                component: Component::TwoPointSymmetric(TwoPointSymmetric { a: atom.x }),
            });
        }
    }
    Ok(MixtureDecomposition {
        components,
        discarded_mass: 0.0,
    })
}

/// The law represented by a mixture.
pub fn recompose(m: &MixtureDecomposition) -> FiniteDistribution {
    let atoms = m
        .components
        .iter()
        .flat_map(|c| {
            c.component
                .distribution()
                .atoms()
                .iter()
                .map(|a| Atom::new(a.x, c.weight * a.p))
                .collect::<Vec<_>>()
        })
        .collect();
    FiniteDistribution::from_atoms_unchecked(atoms)
}
