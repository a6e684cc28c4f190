//! Hadamard codebook hashing.
//!
//! The crate is organised around the pipeline it implements:
//!
//! * [`hadamard`] builds Sylvester Hadamard matrices and derives balanced,
//!   mutually orthogonal class codebooks from them (with a Gaussian
//!   projection when the code length is too short for the class count).
//! * [`dataset`] loads features and labels, generates synthetic blobs and
//!   performs the query/train/database split.
//! * [`model`] is a small dense hash network with a tanh hash layer and a
//!   linear classifier, hand-written gradients and SGD with momentum.
//! * [`trainer`] runs the mini-batch optimisation loop with checkpointing.
//! * [`retrieval`] binarises activations into bit-packed codes, runs exact
//!   Hamming ranking and computes mAP@R and PR curves.
//! * [`analysis`] provides bit balance, activation histograms, the retrieval
//!   confusion matrix, codebook Gram matrices and the λ / ablation sweeps.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root pin the common instantiations.

pub mod analysis;
pub mod dataset;
pub mod error;
pub mod hadamard;
mod io;
pub mod linalg;
pub mod lsh;
pub mod model;
pub mod retrieval;
pub mod rng;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Training-precision hash network.
pub type HashNetworkF64 = model::HashNetwork<f64>;
/// Single-precision hash network, e.g. for inference snapshots.
pub type HashNetworkF32 = model::HashNetwork<f32>;
pub type MatrixF64 = linalg::Matrix<f64>;
pub type MatrixF32 = linalg::Matrix<f32>;
pub type ProjectionMatrixF64 = hadamard::ProjectionMatrix<f64>;
pub type GradientSetF64 = model::GradientSet<f64>;
pub type SgdF64 = model::Sgd<f64>;
pub type TrainerCheckpointF64 = trainer::Checkpoint<f64>;
