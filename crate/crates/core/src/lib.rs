//! Collective light scattering and cooperative decay of two-level (`J = 0 → 1`)
//! emitters inside a rectangular perfectly conducting waveguide.
//!
//! Dimensionless units throughout: lengths in `1/k0`, times in `1/γ0`, rates
//! and detunings in `γ0`.

pub mod ensemble;
pub mod error;
pub mod evolve;
pub mod greens;
pub mod special;
pub mod spectrum;
pub mod steady;
pub mod waveguide;

pub use error::{Error, Result};
