//! Dense and sparse symmetric positive-definite linear algebra.

mod cholesky;
mod dense;
mod sparse;

pub use cholesky::{Ordering, SparseCholesky, SymbolicCholesky};
pub use dense::{dense_alloc_peak, dot, reset_dense_alloc_peak, DenseCholesky, DenseMatrix};
pub use sparse::{CscMatrix, SparseSymMatrix};
