//! Two counterpropagating single photons scattering through a one-dimensional
//! array of two-level emitters coupled to a waveguide.
//!
//! Frequencies are measured in units of the waveguide decay rate `Γ = g²`,
//! and emitter positions are stored as optical phases `k_F z`.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: geometry, pulses, gate results
//! - [`special`]: Faddeeva / complex `erfc` and the entangled-pulse kernel
//! - [`quad`]: quadrature grids and adaptive integration
//! - [`eigen`]: one- and two-excitation decay matrices and their eigensystems
//! - [`scatter2`]: the two-photon spectrum and gate fidelity for arbitrary arrays
//! - [`interacting`]: the analytic interacting-pair design
//! - [`adiabatic`]: single-site closed forms valid for `Γ ≫ σ_ω`
//! - [`transfer`]: single-photon transfer matrices and the spacing optimizer
//! - [`experiments`]: sweeps, power-law fits and Monte Carlo position errors
//! - [`validate`]: the invariant suite

pub mod adiabatic;
pub mod eigen;
mod error;
pub mod experiments;
pub mod interacting;
pub mod model;
pub mod quad;
pub mod scatter2;
pub mod special;
pub mod transfer;
pub mod validate;

pub use error::{Error, ErrorKind, Result};
pub use model::{EmitterArray, GateResult, PulseShape, PulseSpec};
pub use quad::{GridSpec, Rule};

pub type C64 = num_complex::Complex64;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    use std::f64::consts::PI;
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}
