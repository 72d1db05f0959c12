//! Numerical library for constructing, verifying and certifying lifted
//! critical points of fully-connected network loss landscapes.
//!
//! A parameter of a narrow network can be carried into a wider network in
//! ways that preserve the output function. Some of those lifted parameters
//! stay critical for every sample set the narrow point is critical for;
//! others are critical only for specially synthesized samples, and those
//! are saddles whenever the loss is nonzero. This crate provides:
//!
//! - [`linalg`]: dense rank/null-space computations via an in-module
//!   Jacobi SVD;
//! - [`net`]: bias-free fully-connected networks and their evaluation;
//! - [`calculus`]: losses, backpropagation gradients, per-sample parameter
//!   Jacobians, and inverse gradient maps;
//! - [`embedding`]: splitting/null embedding steps, the zero-tail family,
//!   and output/criticality verifiers;
//! - [`lifting`]: sample-output synthesis from kernel vectors, the wide
//!   hidden-layer construction, saddle certification, and the
//!   sample-independence probe.

pub mod calculus;
pub mod embedding;
pub mod error;
pub mod lifting;
pub mod linalg;
pub mod net;

pub use error::{Error, Result};
