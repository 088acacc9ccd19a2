//! Numerical toolkit for the two-ring ("double tower") bubble ansatz of the
//! critical Schroedinger equation `-Δu + V(|y|) u = u^((N+2)/(N-2))`.
//!
//! The crate builds the 2k-bubble ansatz, evaluates the closed-form
//! constants of its energy expansion, compares that expansion against
//! direct quadrature and Monte Carlo, and locates critical points of the
//! reduced energy.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod bubble;
pub mod config;
pub mod constants;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod integrals;
pub mod lattice;
pub mod montecarlo;
pub mod optimize;
pub mod potentials;
pub mod quadrature;
pub mod reduced;
pub mod residual;
pub mod special;
pub mod summation;

pub use error::{Error, Result};
pub use geometry::{CenterSet, Configuration, Dimension, Ring};
pub use potentials::{Potential, PotentialSpec, RadialPotential};
