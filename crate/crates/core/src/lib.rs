//! Phase-domain simulation of back-propagation-free optical PINN training.
//!
//! The crate models photonic neural networks as meshes of programmable
//! Mach-Zehnder interferometers (real Givens rotations), optionally compressed
//! with tensor-train (TT) factorized layers, and trains them with zeroth-order
//! sign-SGD using forward evaluations only. The target problem is a
//! high-dimensional Hamilton-Jacobi-Bellman PDE with a closed-form solution;
//! a hand-derived backpropagation baseline and a closed-form hardware cost
//! model complete the picture.
//!
//! Module map:
//!
//! * [`tensor_train`] - TT-factorized linear layers.
//! * [`photonic_mesh`] - Clements meshes, SVD layer programs, hardware noise, chips.
//! * [`pinn`] - the HJB problem, finite-difference residual loss, validation.
//! * [`zo_trainer`] - SPSA gradient estimation and the sign-SGD training loop.
//! * [`baseline_bp`] - off-chip dense MLP training and hardware mapping.
//! * [`cost_model`] - MZI counts, latency, energy and training budgets.
//! * [`checkpoint`] - JSON checkpoints for chips and dense MLPs.

pub mod baseline_bp;
pub mod checkpoint;
pub mod cost_model;
pub mod error;
pub mod photonic_mesh;
pub mod pinn;
pub mod tensor_train;
pub mod zo_trainer;

pub use error::{Error, Result};

/// Reduce an angle to the canonical range `[0, 2π)`.
#[inline]
pub fn wrap_phase(phi: f64) -> f64 {
    let r = phi.rem_euclid(std::f64::consts::TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs, and keeps -0.0.
    if r >= std::f64::consts::TAU || r == 0.0 {
        0.0
    } else {
        r
    }
}
