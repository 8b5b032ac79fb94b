//! Topology optimization of geometrically nonlinear 2D elastic structures and
//! compliant mechanisms.
//!
//! The equilibrium equations `r(u, ρ) = 0` of a SIMP-penalized neo-Hookean Q4
//! discretization are solved by an inexact Newton method. Its linear systems
//! reuse a held `LDLᵀ` factorization through the Iterative Combined
//! Approximations (ICA) fixed-point sequence `s⁽ᵏ⁺¹⁾ = s̃ − B s⁽ᵏ⁾`, where
//! `B = K₀⁻¹ ΔK`. How often the tangent is factored and how often `ΔK` is
//! refreshed is selected by a [`Strategy`].
//!
//! The crate is organized bottom-up:
//!
//! - [`mesh`]: regular Q4 grids, DOF numbering, supports, loads and springs.
//! - [`material`]: Simo-Ciarlet neo-Hookean law in plane strain.
//! - [`assembly`]: element and global tangent, internal forces, residual.
//! - [`sparse`]: symmetric sparse storage and the block `LDLᵀ` factorization.
//! - [`reanalysis`]: ICA and CA solves, `‖B‖₂` estimation.
//! - [`nonlinear`]: Newton with Armijo line search and the factorization policy.
//! - [`sensitivity`]: adjoint solve and objective gradient.
//! - [`filter`]: density filter and its transpose.
//! - [`optimizer`]: SLP outer loop, continuation and stationarity test.
//! - [`bench`]: the four benchmark problems.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod bench;
mod error;
pub mod filter;
pub mod history;
pub mod material;
pub mod mesh;
pub mod nonlinear;
pub mod optimizer;
pub mod reanalysis;
pub mod sensitivity;
pub mod sparse;

pub use error::{Error, Result};
pub use nonlinear::Strategy;
