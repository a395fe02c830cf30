//! Regulated reconstruction of long-time spin-boson dynamics.
//!
//! The crate evaluates bath correlators for an algebraic spectral density
//! with exponential cutoff, solves the rotating-wave survival problem exactly,
//! builds partially resummed time-local generators, and integrates the
//! correction `C(t)` to the Davies semigroup so that the dynamical map
//! `Φ(t) = exp(L0 t) + C(t)` stays bounded at late times.
//!
//! Time is measured in units of `1/Δ` and frequencies in units of `Δ`.

pub mod analysis;
pub mod bath;
pub mod cumulants;
pub mod error;
pub mod quad;
pub mod rwa;
pub mod sbm;
pub mod superop;
pub mod volterra;

pub use bath::{Bath, BathSpec, Beta};
pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use superop::{QubitState, Superop, VecState};
