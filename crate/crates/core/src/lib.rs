//! Numerical toolkit for the linearized hard-sphere Boltzmann equation in
//! strictly convex domains with non-isothermal diffuse-reflection walls.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: level-set domains, exit maps, charts and stochastic cycles.
//! - [`kinetic_weight`]: the kinetic distance `α` and its cutoff `χ`.
//! - [`collision`]: `ν`, the Grad kernel `k`, `K`, `Γ` and kernel bound checks.
//! - [`boundary`]: wall temperature, wall Maxwellian, diffuse reflection.
//! - [`solver`]: collocation solvers for the steady and transient problems.
//! - [`verify`]: lemma-level numerical checks producing [`verify::LemmaCheck`] records.

pub mod boundary;
pub mod collision;
pub mod error;
pub mod geometry;
pub mod kinetic_weight;
pub mod quadrature;
pub mod reduce;
pub mod solver;
pub mod verify;

pub use error::{KineticError, Result};
pub use nalgebra::{Matrix3, Vector3};
