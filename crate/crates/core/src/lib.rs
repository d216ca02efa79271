//! Convex regularized estimation for high-dimensional tensor regression.
//!
//! The crate is `no_std` (with `alloc`). It provides the dense tensor
//! substrate, the catalogue of structured norms together with their duals and
//! proximal maps, first-order solvers for the penalized least-squares program,
//! Monte-Carlo Gaussian-width estimation, synthetic data generators for the
//! sparse and low-rank model classes, and constructive packing sets.
//!
//! Enable the `std` feature for faster BLAS-like kernels inside `nalgebra`.
//! Numerical results do not depend on the feature.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod datagen;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod math;
pub mod packing;
pub mod projector;
pub mod regularizer;
pub mod rng;
pub mod solver;
pub mod spectral;
pub mod tensor;

pub use error::{Error, Result};
pub use projector::{Projector, ProjectorTriple, TuckerPattern};
pub use regularizer::{RegularizerSpec, SubspaceSpec};
pub use tensor::DenseTensor;
