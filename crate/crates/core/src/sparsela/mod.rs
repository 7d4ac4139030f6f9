//! Symmetric sparse linear algebra: storage, fill-reducing orderings,
//! Cholesky factorization, solves, log-determinants and GMRF sampling.

mod cholesky;
mod csr;
mod ops;
mod ordering;
mod sym;

pub use cholesky::{factorize, sample_gmrf, CholFactor, SymbolicCholesky};
pub use csr::{sym_product, CsrMatrix};
pub use ops::{kron, quad_form};
pub use ordering::{approximate_minimum_degree, compute_ordering, OrderingChoice};
pub use sym::SparseSym;
