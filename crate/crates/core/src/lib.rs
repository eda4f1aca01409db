//! Numerical toolkit for finite-sample iterative self-improvement dynamics:
//! lower-bound maps and their invariant intervals, feasibility and
//! improvement regions of easy-to-hard curricula, critical question
//! budgets, grid scans, and a stochastic simulator of the
//! generate, filter, update loop.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cubic;
pub mod dynamics;
pub mod error;
pub mod montecarlo;
pub mod params;
pub mod regions;
pub mod root;
pub mod sim;
pub mod verify;

pub use cubic::{Interval, SigmaParam};
pub use dynamics::{CurriculumCoefficients, MapSpec, Trajectory};
pub use error::{Error, Result};
pub use params::{derive_constants, validate_domain, DerivedConstants, TheoryParams, ValidityReport};
