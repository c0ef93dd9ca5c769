//! Optimal prediction of the last zero of a spectrally negative Lévy process.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod levy;
pub mod numeric;
pub mod quantity;
pub mod scale;
pub mod sim;

pub use error::{Error, Rejection, Result};
pub use levy::{validate, Family, LevyModel, MomentOrder, Variation};
pub use quantity::{Extended, Provenance, Quantity};
pub use scale::{McBudget, PotentialKind, ScaleFamily};
pub mod boundary;
pub mod stopping;
pub use stopping::{GainSpec, UbEquation};
pub use boundary::{solve, BoundaryCurve, Diagnostics, Solution, SolverConfig, ValueSurface};
pub mod validation;
pub use validation::{applicable, CriterionOutcome, McSettings, Suite};
