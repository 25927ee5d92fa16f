//! Dense linear algebra and seeded sampling.
//!
//! Everything here is domain-agnostic: a row-major [`Matrix`], a cyclic
//! Jacobi eigensolver, Cholesky solves, an O(n) spectral toolkit for
//! arrowhead matrices, and a reproducible Gaussian sampler.

mod arrowhead;
mod eigen;
mod matrix;
mod rng;

pub use arrowhead::{Arrowhead, Inertia};
pub use eigen::{cholesky_solve, sym_eig, sym_eig_with, EigOptions, EigenDecomposition};
pub use matrix::{dot, norm1, norm2, norm_inf, Matrix};
pub use rng::{derive_seed, gaussian_sample, SplitMix64};
