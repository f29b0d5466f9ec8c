//! Exact and Monte Carlo simulation of a Bell-type path-spin noncontextuality test
//! on wing-2 subensembles of an EPR-Bohm singlet source.
//!
//! The wing-1 spin measurement post-selects wing-2 neutrons into subensembles;
//! each subensemble passes a Mach-Zehnder interferometer with a spin-flipper on
//! one arm, and the CHSH-form combination of path and spin correlations is
//! evaluated exactly, from sampled detector counts, and against the bound
//! obeyed by every noncontextual hidden-variable assignment.

pub mod apparatus;
pub mod error;
pub mod nri;
pub mod qcore;
pub mod scenario;
pub mod shots;
pub mod states;

pub use error::{Error, Result};
pub use qcore::{BlochVector, Complex, Label, Operator, OperatorKind, Sign, StateVector};
