//! Finite-volume perfect Bose gas in anisotropic Dirichlet boxes.
//!
//! Units: ħ = m = 1, one-particle Hamiltonian −Δ/2.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod canonical;
pub mod cli;
pub mod error;
pub mod numeric;
pub mod grandcanonical;
pub mod kac;
pub mod limits;
pub mod spectrum;

pub use error::{Error, Result};
