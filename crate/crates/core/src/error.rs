use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::packing::PackingSet;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes are incompatible for the requested operation.
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },
    /// Empty, duplicated or out-of-range axis selection.
    InvalidAxes(String),
    /// A constructor saw NaN or infinity.
    NonFinite,
    /// Data length does not equal the product of the extents.
    LengthMismatch { expected: usize, found: usize },
    /// Operation requires a tensor of a different order.
    OrderMismatch { expected: usize, found: usize },
    /// Primal evaluation requested for a dual-only regularizer.
    UnsupportedKind(&'static str),
    /// The regularizer has no closed-form proximal map.
    NoClosedFormProx(&'static str),
    /// No compatibility bound covers this (regularizer, subspace) pair.
    UnmatchedPair,
    /// Power method needs a nonzero tensor.
    ZeroTensor,
    /// SVD did not converge.
    SvdFailure,
    /// Projector factor is not orthonormal or has the wrong size.
    BadProjector(String),
    /// Class parameters cannot be satisfied for the requested shape.
    InfeasibleClass(String),
    /// Covariance factor is non-finite or has the wrong size.
    BadCovarianceFactor,
    /// VAR companion matrix has spectral radius >= 1.
    UnstableModel { spectral_radius: f64 },
    /// Greedy packing ran out of candidate draws.
    BudgetExhausted(PackingSet),
    /// Invalid configuration value.
    InvalidConfig(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { expected, found } => {
                write!(f, "shape mismatch: expected {expected:?}, found {found:?}")
            }
            Error::InvalidAxes(msg) => write!(f, "invalid axes: {msg}"),
            Error::NonFinite => f.write_str("non-finite entry"),
            Error::LengthMismatch { expected, found } => {
                write!(f, "data length {found} does not match shape product {expected}")
            }
            Error::OrderMismatch { expected, found } => {
                write!(f, "expected a tensor of order {expected}, found order {found}")
            }
            Error::UnsupportedKind(kind) => write!(f, "primal evaluation unsupported for {kind}"),
            Error::NoClosedFormProx(kind) => write!(f, "no closed-form proximal map for {kind}"),
            Error::UnmatchedPair => f.write_str("no compatibility bound for this regularizer/subspace pair"),
            Error::ZeroTensor => f.write_str("tensor is zero"),
            Error::SvdFailure => f.write_str("SVD failed to converge"),
            Error::BadProjector(msg) => write!(f, "bad projector: {msg}"),
            Error::InfeasibleClass(msg) => write!(f, "infeasible model class: {msg}"),
            Error::BadCovarianceFactor => f.write_str("covariance factor is non-finite or mis-sized"),
            Error::UnstableModel { spectral_radius } => {
                write!(f, "VAR model is unstable (companion spectral radius {spectral_radius})")
            }
            Error::BudgetExhausted(set) => write!(
                f,
                "packing budget exhausted with {} accepted elements",
                set.elements.len()
            ),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
