//! Mean field games on the periodic unit interval.
//!
//! Finite-horizon, ergodic and discounted MFG systems with quadratic
//! Hamiltonian and monotone nonlocal couplings, their linearizations, and
//! evaluations of the master equation and its long-time corrector.

pub mod error;
pub mod experiments;
pub mod grid;
pub mod linearized;
pub mod master;
pub mod mfg_discounted;
pub mod mfg_ergodic;
pub mod mfg_finite;
pub mod model;
pub mod scheme;
pub mod tridiag;

pub use error::{Error, Result};
pub use grid::{Density, Field, SignedField, TorusGrid};
pub use model::{Coupling, ModelSpec, Preset};
