//! Energy-conserving finite-volume solver for 2-D incompressible flow and a
//! POD-Galerkin reduced-order model that preserves the solver's discrete
//! conservation structure (mass, global momentum, kinetic energy).
//!
//! The crate is organized bottom-up:
//!
//! - [`sparse`]: deterministic CSR matrices used for all grid operators.
//! - [`grid`]: staggered-grid geometry, boundary conditions, unknown layout.
//! - [`operators`]: divergence, gradient, diffusion, and convection assembly.
//! - [`poisson`]: pressure Poisson solves and divergence-free projection.
//! - [`solver`]: full-order time integration (implicit midpoint, RK4).
//! - [`pod`]: weighted and momentum-constrained POD bases, lifting field.
//! - [`rom`]: reduced operators, reduced time integration, pressure recovery.
//! - [`diagnostics`]: error norms and conservation traces.
//! - [`cases`]: the shear-layer, lid-driven-cavity, and actuator setups.
//! - [`pipeline`]: snapshot -> basis -> reduced-run orchestration and file IO.

pub mod cases;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod io;
pub mod operators;
pub mod pipeline;
pub mod pod;
pub mod poisson;
pub mod rom;
pub mod solve;
pub mod solver;
pub mod sparse;
pub mod vecops;

pub use error::{Error, Result};
