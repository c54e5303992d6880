//! Complex sparse/dense linear algebra kernels.
//!
//! FE matrices live in [`CsrMatrix`]; covariances, bases and reduced systems
//! use dense `nalgebra` matrices.

mod dense;
mod lu;
mod sparse;

pub use dense::{cholesky_jittered, dense_solve, orthonormal_extend, sym_eig, SymEigen, DEFLATION_TOL};
pub use lu::{lu_factor, reverse_cuthill_mckee, LuFactors, SolveMode};
pub use sparse::CsrMatrix;
