//! Local maximal operators on proper open subsets of R^n.
//!
//! Geometry (domains, cubes, the families `F_beta`, Whitney-type coverings,
//! clouds, Besicovitch and Calderon-Zygmund selections), grid fields with
//! exact summed-area integrals, weight-class diagnostics, maximal operator
//! evaluation, and the experiments that check the two-weight theory
//! numerically.

pub mod beta;
pub mod coverings;
pub mod cube;
pub mod domain;
pub mod dyadic;
pub mod error;
pub mod field;
pub mod grid;
pub mod maximal;
pub mod report;
pub mod verification;
pub mod weights;

pub use beta::Beta;
pub use domain::{Domain, DomainKind, DomainSpec};
pub use dyadic::Dyadic;
pub use error::{Error, Result};
pub use grid::{Grid, GridBox, Idx, MAX_DIM};
pub use cube::{in_family, Cube, FamilyParams};
pub use field::ScalarField;
pub use maximal::{evaluate, Lattice, MaximalRequest, MaximalResult, Mode, Region};
