//! Dense and sparse linear algebra, the matrix exponential, and the seeded
//! random source used everywhere else.

mod dense;
mod rng;
mod sparse;

pub use dense::{mat_exp, rodrigues, rotation_2d, DenseMatrix, MAX_EXP_DIM};
pub use rng::Rng;
pub use sparse::{operator_norm_estimate, SparseMatrix};

pub(crate) use sparse::parse_field;
#[allow(unused_imports)]
pub(crate) use sparse::norm2;
