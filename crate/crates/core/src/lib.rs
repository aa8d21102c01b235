//! Effective conductivities of periodic media whose phases may be degenerate
//! (positive semidefinite rather than definite).
//!
//! - [`linalg`]: 2×2 and 3×3 symmetric linear algebra.
//! - [`laminate`]: the explicit rank-one laminate formula, the algebraic
//!   conditions for a positive definite effective tensor, and the space V
//!   of averaged admissible fields.
//! - [`cell`]: a δ-regularized periodic cell-problem solver for arbitrary
//!   grid-sampled coefficients, extrapolated to δ = 0.
//! - [`anomalous`]: the two-dimensional example whose Γ-limit is nonlocal,
//!   with its spectral and convolution forms and recovery sequences.

pub mod anomalous;
pub mod cell;
pub mod laminate;
pub mod linalg;

pub use linalg::{EigenDecomp, LinalgError, SquareMat, SymMat, Vector};
