//! Numerical toolkit for moment inequalities of sums of two independent
//! centered or symmetric random variables.
//!
//! * [`distributions`]: finite laws, exact moments and convolution.
//! * [`decompose`]: mixtures of two-point laws for centered/symmetric laws.
//! * [`constants`]: sharp constants of `E|X+Y|^rho` against `E|X|^rho + E|Y|^rho`.
//! * [`conditions`]: function-class membership checks.
//! * [`verifier`]: gaps, two-point functionals, fuzzing and sharpness search.

pub mod conditions;
pub mod constants;
pub mod decompose;
pub mod distributions;
pub mod error;
pub mod function;
pub mod lowdisc;
pub mod optim;
pub mod quad;
pub mod verifier;

pub use constants::{sharp_bounds, BoundsReport, Extremum, Regime, Side, VarClass};
pub use distributions::{Atom, FiniteDistribution, TwoPointCentered, TwoPointSymmetric};
pub use error::{Error, Result};
pub use function::FunctionSpec;
