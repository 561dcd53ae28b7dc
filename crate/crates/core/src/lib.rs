//! Weighted low-rank matrix approximation.
//!
//! Given data `X` (m x n) and one weight per entry, find rank-`p` products
//! `A B'` minimizing `sum w_ij^2 (X_ij - (A B')_ij)^2`. The crate provides the
//! alternating solver, a damped stationary-point solver for signed
//! pseudo-weights, continuation of solutions along an affine pseudo-weight
//! path towards the uniform (SVD) case, and multistart enumeration of the
//! distinct local solutions of a problem.

pub mod cli;
pub mod error;
pub mod fixtures;
pub mod homotopy;
pub mod io;
pub mod landscape;
pub mod matrix;
pub mod orthobasis;
pub mod repro;
pub mod solver;

pub use error::{Axis, Error, Result};
pub use matrix::{Matrix, PseudoWeightGrid};
