//! Matrices of sesquilinear forms on product Hilbert spaces.
//!
//! The crate is organised bottom-up:
//!
//! * [`certificates`] evaluates well-posedness criteria from the scalar
//!   constant matrices alone (Gershgorin dominance, ellipticity, continuity,
//!   accretivity, analyticity angle, exponential stability).
//! * [`forms`] holds Galerkin product spaces and form matrices in coordinates,
//!   together with discrete estimates of their constants and numerical-range
//!   sampling.
//! * [`models`] assembles the three coupled 1D applications (ephaptically
//!   coupled fibres, a strongly damped wave, heat with dynamic boundary
//!   conditions) and a constant-coefficient coupled diffusion.
//! * [`evolution`] integrates `M u' = -S u` with implicit Euler or
//!   Crank–Nicolson and records observables.
//! * [`qualitative`] checks invariance properties, algebraically on the form
//!   and at runtime on trajectories.
//! * [`config`] and [`cli`] drive everything from a TOML experiment file.

pub mod certificates;
pub mod cli;
pub mod config;
pub mod error;
pub mod evolution;
pub mod forms;
pub mod linalg;
pub mod models;
pub mod qualitative;
pub mod report;

pub use error::{Error, Result};

/// Shortest decimal representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        ryu::Buffer::new().format_finite(x).to_string()
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}
