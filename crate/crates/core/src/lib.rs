//! Simulation and numerical-theory engine for the one-dimensional symmetric
//! exclusion process with long jumps and infinitely extended reservoirs.
//!
//! The crate has three layers:
//!
//! * microscopic: an event-driven, statistically exact simulator of the
//!   speeded-up process with generator `Θ(N)·L_N` ([`kmc`]), plus the
//!   discrete lattice operators and reservoir rate tables ([`model`],
//!   [`kernel`]);
//! * macroscopic: the hydrodynamic PDE family ([`hydro`]), the test-function
//!   spaces with their inner products ([`testfn`]), and the five regime
//!   semigroups including the singular Sturm-Liouville spectral problem
//!   ([`spectral`]);
//! * statistical: fluctuation-field evaluation, stationary ensembles and the
//!   estimators that compare simulation against the macroscopic predictions
//!   ([`fluct`]).

pub mod error;
pub mod fenwick;
pub mod fluct;
pub mod hydro;
pub mod kernel;
pub mod kmc;
pub mod model;
pub mod quad;
pub mod spectral;
pub mod stats;
pub mod testfn;

pub use error::{Error, Result};
pub use kernel::JumpKernel;
pub use model::{BoundaryRateTables, ModelParams, RegimeId, RegimeSpec, SemigroupKind, TestSpace};
