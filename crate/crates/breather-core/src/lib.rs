//! Variational solver for traveling breather profiles in cylindrical and
//! slab Kerr waveguides.
//!
//! The solver minimizes an energy functional over a truncated
//! Fourier × finite-element ansatz space: odd temporal Fourier modes
//! e^{ikωt} (|k| ≤ K) tensored with piecewise-linear elements on the core
//! cross-section [0, R]. Exterior decay is encoded by a Steklov boundary
//! term built from decaying fundamental solutions of the per-mode operators
//! on the cladding. Module layout:
//!
//! - [`config`]: problem description, derived coefficients, admissibility
//!   arithmetic for the two supported cladding families.
//! - [`special`]: Bessel functions J/Y/I/K of orders 0 and 1.
//! - [`kernel`]: time-averaging kernels for the nonlocal cubic nonlinearity.
//! - [`grid`]: time grid, discrete profiles, transforms, element quadrature.
//! - [`fundsol`]: cladding fundamental solutions and assumption audits.
//! - [`energy`]: energy/gradient evaluation and quasi-Newton minimization.
//! - [`reconstruct`]: field extension, diagnostics, and parameter sweeps.

/// Crate version, re-exported so downstream tools can stamp artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod config;
pub mod energy;
pub mod fundsol;
pub mod grid;
pub mod kernel;
pub mod reconstruct;
pub mod special;
