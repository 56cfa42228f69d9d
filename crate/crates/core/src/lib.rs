//! Spectral numerics for the dynamic Φ⁴ model with a harmonic confinement.
//!
//! The crate is organised bottom-up: [`hermite`] holds the eigenbasis of
//! `H = −Δ + |x|²` and its transforms, [`besov`] the Littlewood–Paley
//! calculus, [`paracalc`] paraproducts and Young integrals, [`noise`] the
//! regularized stochastic convolution and renormalization functions,
//! [`diagrams`] the Wick diagrams, and [`solver`] the two time steppers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod besov;
pub mod diagrams;
pub mod error;
pub mod hermite;
pub mod noise;
pub mod paracalc;
pub mod quad;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
pub use hermite::{
    build_basis, EigenMode, Field, FieldPath, ProductRule, Products, QuadratureGrid, SpectralBasis,
    Transform,
};
