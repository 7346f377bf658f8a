//! Mixture-of-experts motion regression with magnitude pruning.
//!
//! The crate trains a gated mixture network on synthetic quadruped gait
//! data, prunes it to a target sparsity with a one-cycle magnitude
//! schedule, and evaluates the result: foot-skating on autoregressive
//! rollouts, parameter/FLOP cost accounting, sparse-inference benchmarks,
//! and expert ablation/activation analysis.
//!
//! All numerics are generic over [`numeric::Scalar`] (`f32` or `f64`);
//! training and deployment run in `f32`, while the `f64` instantiation
//! backs the finite-difference gradient checks.

pub mod analysis;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod network;
pub mod numeric;
pub mod prune;
pub mod train;

pub use error::{Error, Result};

/// Single-precision network: the training and deployment type.
pub type MoeNetworkF32 = network::MoeNetwork<f32>;
/// Double-precision network, used for gradient checking.
pub type MoeNetworkF64 = network::MoeNetwork<f64>;
pub type DenseMatrixF32 = numeric::DenseMatrix<f32>;
pub type DenseMatrixF64 = numeric::DenseMatrix<f64>;
pub type CsrMatrixF32 = numeric::CsrMatrix<f32>;
pub type CsrMatrixF64 = numeric::CsrMatrix<f64>;
