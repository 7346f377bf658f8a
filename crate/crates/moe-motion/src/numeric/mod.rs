//! Scalar abstraction, deterministic RNG, and the dense/sparse matrix types
//! everything else is built on.

mod csr;
mod dense;
pub mod ops;
mod rng;
mod scalar;

pub use csr::CsrMatrix;
pub use dense::DenseMatrix;
pub use rng::Rng;
pub use scalar::Scalar;
