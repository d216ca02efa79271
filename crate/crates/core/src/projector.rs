//! Orthogonal projectors stored through orthonormal factors, and the
//! Tucker-style projections built from three of them.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::DenseTensor;

/// Orthonormality tolerance for projector factors.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// `P = U Uᵀ` for an orthonormal `dim x rank` factor `U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProjector", into = "RawProjector")]
pub struct Projector {
    factor: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawProjector {
    dim: usize,
    rank: usize,
    /// Row-major `dim x rank` factor.
    basis: Vec<f64>,
}

impl TryFrom<RawProjector> for Projector {
    type Error = Error;

    fn try_from(raw: RawProjector) -> Result<Self> {
        if raw.basis.len() != raw.dim * raw.rank {
            return Err(Error::BadProjector(alloc::format!(
                "basis has {} entries, expected {}",
                raw.basis.len(),
                raw.dim * raw.rank
            )));
        }
        Projector::new(DMatrix::from_row_slice(raw.dim, raw.rank, &raw.basis))
    }
}

impl From<Projector> for RawProjector {
    fn from(p: Projector) -> Self {
        let mut basis = Vec::with_capacity(p.factor.len());
        for i in 0..p.factor.nrows() {
            for j in 0..p.factor.ncols() {
                basis.push(p.factor[(i, j)]);
            }
        }
        RawProjector { dim: p.factor.nrows(), rank: p.factor.ncols(), basis }
    }
}

impl Projector {
    /// Wrap an orthonormal factor; rejects `UᵀU != I` beyond
    /// [`ORTHONORMAL_TOL`].
    pub fn new(factor: DMatrix<f64>) -> Result<Self> {
        if factor.nrows() == 0 {
            return Err(Error::BadProjector("dimension must be positive".into()));
        }
        if factor.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let gram = factor.transpose() * &factor;
        let dev = (gram - DMatrix::<f64>::identity(factor.ncols(), factor.ncols())).amax();
        if dev > ORTHONORMAL_TOL {
            return Err(Error::BadProjector(alloc::format!("factor columns not orthonormal (deviation {dev:e})")));
        }
        Ok(Self { factor })
    }

    /// Projector onto the column span of `m`.
    pub fn from_span(m: &DMatrix<f64>) -> Result<Self> {
        Self::new(linalg::orthonormal_basis(m)?)
    }

    pub fn zero(dim: usize) -> Self {
        Self { factor: DMatrix::zeros(dim, 0) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { factor: DMatrix::identity(dim, dim) }
    }

    /// Span of the given coordinate axes.
    pub fn coordinates(dim: usize, axes: &[usize]) -> Result<Self> {
        let mut f = DMatrix::zeros(dim, axes.len());
        for (c, &a) in axes.iter().enumerate() {
            if a >= dim {
                return Err(Error::BadProjector(alloc::format!("axis {a} out of range for dimension {dim}")));
            }
            f[(a, c)] = 1.0;
        }
        Self::new(f)
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// Dense `U Uᵀ`.
    pub fn matrix(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }

    /// Dense `I - U Uᵀ`.
    pub fn complement_matrix(&self) -> DMatrix<f64> {
        DMatrix::identity(self.dim(), self.dim()) - self.matrix()
    }

    pub fn apply_vec(&self, v: &[f64]) -> Vec<f64> {
        let x = nalgebra::DVector::from_column_slice(v);
        let y = &self.factor * (self.factor.transpose() * x);
        y.iter().copied().collect()
    }
}

/// Which sum of sign patterns `P^± ⊗ P^± ⊗ P^±` to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuckerPattern {
    /// `P1 ⊗ P2 ⊗ P3`.
    Full,
    /// Terms with at most one complemented factor.
    Q,
    /// Terms with at least two complemented factors.
    QPerp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectorTriple {
    pub projectors: [Projector; 3],
}

impl ProjectorTriple {
    pub fn new(p1: Projector, p2: Projector, p3: Projector) -> Self {
        Self { projectors: [p1, p2, p3] }
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.projectors[0].dim(), self.projectors[1].dim(), self.projectors[2].dim()]
    }

    pub fn ranks(&self) -> [usize; 3] {
        [self.projectors[0].rank(), self.projectors[1].rank(), self.projectors[2].rank()]
    }

    /// Projectors onto the column spaces of the three unfoldings of `a`.
    pub fn from_tensor(a: &DenseTensor) -> Result<Self> {
        if a.order() != 3 {
            return Err(Error::OrderMismatch { expected: 3, found: a.order() });
        }
        let p = |k: usize| -> Result<Projector> {
            let m = crate::tensor::matricize(a, &[k])?;
            if m.iter().all(|&v| v == 0.0) {
                return Ok(Projector::zero(m.nrows()));
            }
            Projector::from_span(&m)
        };
        Ok(Self::new(p(0)?, p(1)?, p(2)?))
    }
}

/// Apply `M1 ⊗ M2 ⊗ M3` mode-wise.
fn apply_modes(a: &DenseTensor, mats: [&DMatrix<f64>; 3]) -> Result<DenseTensor> {
    let mut out = a.mode_product(0, mats[0])?;
    out = out.mode_product(1, mats[1])?;
    out.mode_product(2, mats[2])
}

/// Apply the Tucker projection selected by `pattern` to a third-order tensor.
///
/// `tucker_project(a, p, Q) + tucker_project(a, p, QPerp) == a`.
pub fn tucker_project(a: &DenseTensor, p: &ProjectorTriple, pattern: TuckerPattern) -> Result<DenseTensor> {
    if a.order() != 3 {
        return Err(Error::OrderMismatch { expected: 3, found: a.order() });
    }
    if a.shape() != p.dims() {
        return Err(Error::ShapeMismatch { expected: p.dims().to_vec(), found: a.shape().to_vec() });
    }
    let on: Vec<DMatrix<f64>> = p.projectors.iter().map(Projector::matrix).collect();
    let off: Vec<DMatrix<f64>> = p.projectors.iter().map(Projector::complement_matrix).collect();
    let pick = |flags: [bool; 3]| -> [&DMatrix<f64>; 3] {
        [
            if flags[0] { &off[0] } else { &on[0] },
            if flags[1] { &off[1] } else { &on[1] },
            if flags[2] { &off[2] } else { &on[2] },
        ]
    };
    // flags[k] = true means the complement on mode k
    let terms: Vec<[bool; 3]> = match pattern {
        TuckerPattern::Full => vec![[false, false, false]],
        TuckerPattern::Q => vec![[false, false, false], [true, false, false], [false, true, false], [false, false, true]],
        TuckerPattern::QPerp => vec![[true, true, true], [true, true, false], [false, true, true], [true, false, true]],
    };
    let mut out = DenseTensor::zeros(a.shape());
    for flags in terms {
        let term = apply_modes(a, pick(flags))?;
        out.add_assign_scaled(1.0, &term)?;
    }
    Ok(out)
}

/// All eight sign-pattern terms, indexed by `4*b1 + 2*b2 + b3` where `bk = 1`
/// selects the complement on mode k. Their sum is the identity.
pub fn sign_pattern_terms(a: &DenseTensor, p: &ProjectorTriple) -> Result<Vec<DenseTensor>> {
    if a.shape() != p.dims() {
        return Err(Error::ShapeMismatch { expected: p.dims().to_vec(), found: a.shape().to_vec() });
    }
    let on: Vec<DMatrix<f64>> = p.projectors.iter().map(Projector::matrix).collect();
    let off: Vec<DMatrix<f64>> = p.projectors.iter().map(Projector::complement_matrix).collect();
    let mut out = Vec::with_capacity(8);
    for code in 0..8usize {
        let m = |k: usize| if (code >> (2 - k)) & 1 == 1 { &off[k] } else { &on[k] };
        out.push(apply_modes(a, [m(0), m(1), m(2)])?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random_tensor(shape: &[usize], seed: u64) -> DenseTensor {
        let mut r = rng::substream(seed, 0);
        DenseTensor::from_fn(shape, |_| r.random_range(-1.0..1.0)).unwrap()
    }

    fn identity_triple(d: [usize; 3]) -> ProjectorTriple {
        ProjectorTriple::new(Projector::identity(d[0]), Projector::identity(d[1]), Projector::identity(d[2]))
    }

    #[test]
    fn identity_projectors_full_is_identity() {
        let a = random_tensor(&[2, 3, 4], 1);
        let out = tucker_project(&a, &identity_triple([2, 3, 4]), TuckerPattern::Full).unwrap();
        assert!(out.sub(&a).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn zero_projectors_q_is_zero() {
        let a = random_tensor(&[2, 3, 4], 2);
        let p = ProjectorTriple::new(Projector::zero(2), Projector::zero(3), Projector::zero(4));
        assert!(tucker_project(&a, &p, TuckerPattern::Q).unwrap().is_zero());
    }

    #[test]
    fn non_orthonormal_factor_rejected() {
        let f = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        assert!(matches!(Projector::new(f), Err(Error::BadProjector(_))));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = random_tensor(&[2, 2, 2], 3);
        let p = identity_triple([2, 2, 3]);
        assert!(matches!(tucker_project(&a, &p, TuckerPattern::Full), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn projector_serde_roundtrip_validates() {
        let p = Projector::coordinates(3, &[0, 2]).unwrap();
        let raw = RawProjector::from(p.clone());
        assert_eq!(Projector::try_from(raw).unwrap(), p);
        let bad = RawProjector { dim: 2, rank: 1, basis: alloc::vec![2.0, 0.0] };
        assert!(Projector::try_from(bad).is_err());
    }
}
