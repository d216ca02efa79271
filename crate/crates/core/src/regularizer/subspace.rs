//! Model subspaces paired with the regularizers and their orthogonal
//! projections.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{RegularizerSpec, Slices};
use crate::error::{Error, Result};
use crate::linalg;
use crate::projector::{tucker_project, Projector, ProjectorTriple, TuckerPattern};
use crate::tensor::{self, DenseTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Space,
    Complement,
}

/// Whether a projector-based subspace plays the role of the model space
/// (the larger space, containing mixed terms) or the inner space `𝓑`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectorRole {
    ASpace,
    BSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum SubspaceSpec {
    /// Tensors supported on the listed entries.
    SupportEntries { shape: [usize; 3], indices: Vec<[usize; 3]> },
    /// Tensors supported on the listed fibers along `mode`; each fiber is
    /// addressed by its indices on the two other axes in increasing axis
    /// order.
    SupportFibers { shape: [usize; 3], mode: usize, fibers: Vec<[usize; 2]> },
    /// Tensors supported on the listed slices spanned by `axes`.
    SupportSlices { shape: [usize; 3], axes: [usize; 2], slices: Vec<usize> },
    /// Per-slice row and column projectors. As `ASpace` the subspace is
    /// `{A : P1⊥ A_j P2⊥ = 0}`; as `BSpace` it is `{A : A_j = P1 A_j P2}`.
    SlicewiseProjectors { axes: [usize; 2], rows: Vec<Projector>, cols: Vec<Projector>, role: ProjectorRole },
    /// Tucker projectors. `ASpace` applies the pattern `Q`, `BSpace` the
    /// full product `P1 ⊗ P2 ⊗ P3`.
    TuckerProjectors { projectors: ProjectorTriple, role: ProjectorRole },
}

impl SubspaceSpec {
    pub fn shape(&self) -> Vec<usize> {
        match self {
            SubspaceSpec::SupportEntries { shape, .. }
            | SubspaceSpec::SupportFibers { shape, .. }
            | SubspaceSpec::SupportSlices { shape, .. } => shape.to_vec(),
            SubspaceSpec::SlicewiseProjectors { axes, rows, cols, .. } => {
                let mut s = vec![0; 3];
                s[axes[0]] = rows.first().map_or(0, Projector::dim);
                s[axes[1]] = cols.first().map_or(0, Projector::dim);
                s[3 - axes[0] - axes[1]] = rows.len();
                s
            }
            SubspaceSpec::TuckerProjectors { projectors, .. } => projectors.dims().to_vec(),
        }
    }

    /// Structural checks: indices in range, axes valid, projector dimensions
    /// consistent.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        match self {
            SubspaceSpec::SupportEntries { shape, indices } => {
                if indices.iter().any(|ix| (0..3).any(|k| ix[k] >= shape[k])) {
                    return bad("support entry out of range".into());
                }
            }
            SubspaceSpec::SupportFibers { shape, mode, fibers } => {
                if *mode >= 3 {
                    return Err(Error::InvalidAxes(alloc::format!("fiber mode {mode} out of range")));
                }
                let others = other_axes(*mode);
                if fibers.iter().any(|f| f[0] >= shape[others[0]] || f[1] >= shape[others[1]]) {
                    return bad("support fiber out of range".into());
                }
            }
            SubspaceSpec::SupportSlices { shape, axes, slices } => {
                check_axes(*axes)?;
                let c = 3 - axes[0] - axes[1];
                if slices.iter().any(|&j| j >= shape[c]) {
                    return bad("support slice out of range".into());
                }
            }
            SubspaceSpec::SlicewiseProjectors { axes, rows, cols, .. } => {
                check_axes(*axes)?;
                if rows.is_empty() || rows.len() != cols.len() {
                    return bad("slicewise projectors need one row and one column projector per slice".into());
                }
                let (dr, dc) = (rows[0].dim(), cols[0].dim());
                if rows.iter().any(|p| p.dim() != dr) || cols.iter().any(|p| p.dim() != dc) {
                    return bad("slicewise projector dimensions differ across slices".into());
                }
            }
            SubspaceSpec::TuckerProjectors { .. } => {}
        }
        Ok(())
    }

    /// The subspace matched to `spec` that contains `truth`: its support for
    /// the sparsity norms, the row/column spaces of its slices for the slice
    /// nuclear norm, the spans of its unfoldings otherwise.
    pub fn matched(spec: &RegularizerSpec, truth: &DenseTensor) -> Result<Self> {
        spec.validate(truth.shape())?;
        if truth.order() != 3 {
            return Err(Error::OrderMismatch { expected: 3, found: truth.order() });
        }
        let s = truth.shape();
        let shape = [s[0], s[1], s[2]];
        Ok(match *spec {
            RegularizerSpec::EntryL1 => {
                let mut indices = Vec::new();
                let mut ix = [0usize; 3];
                for (off, v) in truth.data().iter().enumerate() {
                    if *v != 0.0 {
                        tensor::unravel(off, s, &mut ix);
                        indices.push(ix);
                    }
                }
                SubspaceSpec::SupportEntries { shape, indices }
            }
            RegularizerSpec::FiberGroup { mode } => {
                let others = other_axes(mode);
                let mut fibers = Vec::new();
                for i in 0..s[others[0]] {
                    for j in 0..s[others[1]] {
                        let mut ix = [0usize; 3];
                        ix[others[0]] = i;
                        ix[others[1]] = j;
                        if (0..s[mode]).any(|t| {
                            ix[mode] = t;
                            truth.get(&ix) != 0.0
                        }) {
                            fibers.push([i, j]);
                        }
                    }
                }
                SubspaceSpec::SupportFibers { shape, mode, fibers }
            }
            RegularizerSpec::SliceFrob { axes } => {
                let sl = Slices::new(s, axes);
                let slices = sl
                    .frobenius_norms(truth.data())
                    .iter()
                    .enumerate()
                    .filter(|(_, n)| **n > 0.0)
                    .map(|(j, _)| j)
                    .collect();
                SubspaceSpec::SupportSlices { shape, axes, slices }
            }
            RegularizerSpec::SliceNuclear { axes } => {
                let sl = Slices::new(s, axes);
                let (dr, dc) = sl.dims();
                let mut rows = Vec::with_capacity(sl.count);
                let mut cols = Vec::with_capacity(sl.count);
                for c in 0..sl.count {
                    let m = sl.matrix(truth.data(), c);
                    if m.iter().all(|v| *v == 0.0) {
                        rows.push(Projector::zero(dr));
                        cols.push(Projector::zero(dc));
                    } else {
                        rows.push(Projector::new(linalg::orthonormal_basis(&m)?)?);
                        cols.push(Projector::new(linalg::orthonormal_basis(&m.transpose())?)?);
                    }
                }
                SubspaceSpec::SlicewiseProjectors { axes, rows, cols, role: ProjectorRole::ASpace }
            }
            RegularizerSpec::MatricizedNuclearSum | RegularizerSpec::TensorSpectralDualOnly => {
                SubspaceSpec::TuckerProjectors {
                    projectors: ProjectorTriple::from_tensor(truth)?,
                    role: ProjectorRole::ASpace,
                }
            }
        })
    }

    /// The companion subspace built from the same data with the other role.
    /// Support subspaces are their own companions.
    pub fn with_role(&self, role: ProjectorRole) -> Self {
        match self {
            SubspaceSpec::SlicewiseProjectors { axes, rows, cols, .. } => SubspaceSpec::SlicewiseProjectors {
                axes: *axes,
                rows: rows.clone(),
                cols: cols.clone(),
                role,
            },
            SubspaceSpec::TuckerProjectors { projectors, .. } => {
                SubspaceSpec::TuckerProjectors { projectors: projectors.clone(), role }
            }
            other => other.clone(),
        }
    }

    /// Orthogonal projection onto the subspace or its complement.
    pub fn project(&self, a: &DenseTensor, which: Which) -> Result<DenseTensor> {
        self.validate()?;
        let shape = self.shape();
        if a.shape() != shape.as_slice() {
            return Err(Error::ShapeMismatch { expected: shape, found: a.shape().to_vec() });
        }
        let space = match self {
            SubspaceSpec::SupportEntries { indices, .. } => {
                let mut mask = vec![false; a.len()];
                for ix in indices {
                    mask[a.offset(ix)] = true;
                }
                return Ok(masked(a, &mask, which));
            }
            SubspaceSpec::SupportFibers { mode, fibers, .. } => {
                let others = other_axes(*mode);
                let mut mask = vec![false; a.len()];
                for f in fibers {
                    let mut ix = [0usize; 3];
                    ix[others[0]] = f[0];
                    ix[others[1]] = f[1];
                    for t in 0..shape[*mode] {
                        ix[*mode] = t;
                        mask[a.offset(&ix)] = true;
                    }
                }
                return Ok(masked(a, &mask, which));
            }
            SubspaceSpec::SupportSlices { axes, slices, .. } => {
                let sl = Slices::new(&shape, *axes);
                let mut mask = vec![false; a.len()];
                for &j in slices {
                    for off in sl.offsets(j) {
                        mask[off] = true;
                    }
                }
                return Ok(masked(a, &mask, which));
            }
            SubspaceSpec::SlicewiseProjectors { axes, rows, cols, role } => {
                let sl = Slices::new(&shape, *axes);
                let mut out = vec![0.0; a.len()];
                for c in 0..sl.count {
                    let m = sl.matrix(a.data(), c);
                    let piece: DMatrix<f64> = match role {
                        ProjectorRole::BSpace => rows[c].matrix() * &m * cols[c].matrix(),
                        ProjectorRole::ASpace => {
                            &m - rows[c].complement_matrix() * &m * cols[c].complement_matrix()
                        }
                    };
                    sl.write(&mut out, c, &piece);
                }
                DenseTensor::from_parts(shape, out)
            }
            SubspaceSpec::TuckerProjectors { projectors, role } => {
                let pattern = match role {
                    ProjectorRole::ASpace => TuckerPattern::Q,
                    ProjectorRole::BSpace => TuckerPattern::Full,
                };
                tucker_project(a, projectors, pattern)?
            }
        };
        match which {
            Which::Space => Ok(space),
            Which::Complement => a.sub(&space),
        }
    }

    /// Number of distinct support elements for the support variants.
    pub(crate) fn support_size(&self) -> Option<usize> {
        let n = match self {
            SubspaceSpec::SupportEntries { indices, .. } => {
                let mut v = indices.clone();
                v.sort_unstable();
                v.dedup();
                v.len()
            }
            SubspaceSpec::SupportFibers { fibers, .. } => {
                let mut v = fibers.clone();
                v.sort_unstable();
                v.dedup();
                v.len()
            }
            SubspaceSpec::SupportSlices { slices, .. } => {
                let mut v = slices.clone();
                v.sort_unstable();
                v.dedup();
                v.len()
            }
            _ => return None,
        };
        Some(n)
    }
}

fn masked(a: &DenseTensor, mask: &[bool], which: Which) -> DenseTensor {
    let keep = matches!(which, Which::Space);
    let data = a.data().iter().zip(mask).map(|(v, m)| if *m == keep { *v } else { 0.0 }).collect();
    DenseTensor::from_parts(a.shape().to_vec(), data)
}

fn other_axes(mode: usize) -> [usize; 2] {
    match mode {
        0 => [1, 2],
        1 => [0, 2],
        _ => [0, 1],
    }
}

fn check_axes(axes: [usize; 2]) -> Result<()> {
    if axes[0] >= 3 || axes[1] >= 3 || axes[0] == axes[1] {
        return Err(Error::InvalidAxes(alloc::format!("slice axes {axes:?} invalid")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projector::sign_pattern_terms;
    use crate::rng;

    #[test]
    fn full_support_is_identity() {
        let mut r = rng::substream(1, 0);
        let a = rng::normal_tensor(&mut r, &[2, 2, 2]);
        let mut indices = Vec::new();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    indices.push([i, j, k]);
                }
            }
        }
        let sub = SubspaceSpec::SupportEntries { shape: [2, 2, 2], indices };
        assert_eq!(sub.project(&a, Which::Space).unwrap(), a);
        assert!(sub.project(&a, Which::Complement).unwrap().is_zero());
    }

    #[test]
    fn tucker_a_space_matches_sign_expansion() {
        let mut r = rng::substream(2, 0);
        let u = rng::unit_vector(&mut r, 3);
        let v = rng::normal_vec(&mut r, 3);
        let w = rng::normal_vec(&mut r, 4);
        let p = ProjectorTriple::new(
            Projector::from_span(&DMatrix::from_column_slice(3, 1, &u)).unwrap(),
            Projector::from_span(&DMatrix::from_column_slice(3, 1, &rng::normal_vec(&mut r, 3))).unwrap(),
            Projector::from_span(&DMatrix::from_column_slice(4, 1, &rng::normal_vec(&mut r, 4))).unwrap(),
        );
        let a = tensor::outer3(&u, &v, &w).unwrap();
        let terms = sign_pattern_terms(&a, &p).unwrap();
        let sub = SubspaceSpec::TuckerProjectors { projectors: p, role: ProjectorRole::ASpace };
        let proj = sub.project(&a, Which::Space).unwrap();
        // codes with at most one complemented mode: 0, 1, 2, 4
        let mut want = DenseTensor::zeros(a.shape());
        for code in [0usize, 1, 2, 4] {
            want.add_assign_scaled(1.0, &terms[code]).unwrap();
        }
        assert!(proj.sub(&want).unwrap().max_abs() < 1e-12);
        // u lies in range(P1): every term with P1⊥ vanishes
        for code in 4..8 {
            assert!(terms[code].max_abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch() {
        let sub = SubspaceSpec::SupportSlices { shape: [2, 2, 3], axes: [0, 1], slices: vec![0] };
        assert!(matches!(
            sub.project(&DenseTensor::zeros(&[2, 2, 2]), Which::Space),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
