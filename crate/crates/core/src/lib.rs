//! Spectral simulation and verification of dissipative martingale solutions
//! to the stochastic Euler equations on the periodic torus.
//!
//! The crate is organized bottom-up:
//!
//! - [`spectral`]: Fourier fields, Leray projection, dealiased transport.
//! - [`forcing`]: Hilbert–Schmidt forcing and reproducible Wiener paths.
//! - [`solver`]: projected stochastic Navier–Stokes stepping with a
//!   term-by-term energy budget.
//! - [`young`]: cell-discretized generalized Young measures.
//! - [`limit`]: vanishing-viscosity ladders and martingale statistics.
//! - [`weak_strong`]: relative-energy comparison against resolved references.

pub mod forcing;
pub mod limit;
pub mod rng;
pub mod solver;
pub mod spectral;
pub mod stats;
pub mod weak_strong;
pub mod young;

pub use forcing::{hs_norm_sq, ForcingMode, ForcingOperator, ModeKind, NoiseBasis, WienerPath};
pub use solver::{EnergyTrace, InitialLaw, SolverConfig};
pub use spectral::{PhysicalField, SpectralField, TorusGrid};
