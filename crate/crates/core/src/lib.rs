//! Inexact Riemannian Newton methods for minimizing smooth, rotation
//! invariant energies over orthonormal frames, with the quotient geometry
//! (geodesics, parallel transport, subspace distances), a family of
//! orthogonality preserving update maps, an inner conjugate-gradient
//! direction solver and two step-size strategies.
//!
//! The crate ships two model problems: a quadratic trace model whose exact
//! minimizer comes from a dense eigendecomposition, and a one-dimensional
//! discretized Kohn-Sham model with Hartree and Dirac-exchange terms.
//!
//! See the `gnewton` binary for the experiment runner.

pub mod energy;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod kernels;
pub mod retraction;
pub mod solver;

pub use error::{Error, Result};
