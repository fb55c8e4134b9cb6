//! Stability analysis of standing pulses in skew-gradient reaction-diffusion
//! systems `M w_t = D w_xx + Q grad V(w)`.
//!
//! The conjugate-point stability index `i(w0)` and the spectral flow of the
//! associated Hamiltonian family are computed from Lagrangian frames and
//! cross-checked against a direct eigensolver and a time integration.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evolve;
pub mod hamiltonian;
pub mod index;
pub mod linalg;
pub mod model;
pub mod pulse;
pub mod spectrum;
pub mod sparse;
pub mod symplectic;

pub use error::{Error, Result};

/// Library version embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
