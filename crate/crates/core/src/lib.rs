//! Numerical laboratory for the absorbing boundary rule of quantum detection.
//!
//! Wave functions evolve under a Schrödinger equation whose boundary carries
//! the complex Robin condition `∂ψ/∂n = iκψ`. The probability of a detector
//! click in a time window is the outward flux through the boundary in that
//! window; the mass that never leaves is the probability that no click ever
//! happens. The crate computes these laws for one and several particles, for
//! fixed and moving detectors, and checks them against two independent
//! formulations: Bohmian exit statistics and explicitly assembled POVMs.
//!
//! Everything here is `no_std` + `alloc`; file formats and the command line
//! front end live in the `absorb-qd` crate.
//!
//! # Discretization conventions
//!
//! Each particle lives on a uniform grid over a 1D interval. Wave functions are
//! stored in the *boundary-symmetrized gauge*: interior amplitudes equal
//! `ψ(x_k)`, endpoint amplitudes equal `ψ(x_k)/√2`. In this gauge the rectangle
//! rule `Σ|a_k|²h` is the trapezoid rule for `|ψ|²`, the finite-difference
//! Hamiltonian with the ghost-point Robin condition folded in is a real
//! symmetric matrix minus `iΓ` with `Γ ⪰ 0` supported on boundary nodes, and the
//! Crank-Nicolson norm loss of every step is exactly the sum of per-face fluxes.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop, clippy::too_many_arguments)]
#![cfg_attr(test, allow(unused_imports))]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bohm;
pub mod detection;
pub mod domain;
pub mod error;
pub mod evolution;
pub mod hamiltonian;
pub mod interp;
pub mod linalg;
pub mod moving;
pub mod multiparticle;
pub mod povm;
pub mod rng;
pub mod stats;

pub use num_complex::Complex64 as C64;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use detection::{
    boundary_flux, detection_distribution, prob_never, reflection_amplitude, DetectionRun,
    FluxSample, NeverReport,
};
pub use domain::{
    gaussian_packet, make_grid, norm_squared, DetectionDistribution, DetectionEvent, Face,
    FaceId, Interval1D, ParticleLabel, PhysicalConstants, PotentialSpec, Side, SpatialGrid,
    WaveFunction1P, WaveFunctionNP,
};
pub use error::{Error, Result};
pub use evolution::{cn_step, dense_propagator, evolve, CnStepper, Propagator, Trajectory};
pub use hamiltonian::{build_effective_hamiltonian, AxisOperator, EffectiveHamiltonian};
