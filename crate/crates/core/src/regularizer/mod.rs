//! Structured norms on third-order tensors: evaluation, dual norms, proximal
//! maps and first-order optimality certificates.
//!
//! Axis numbering is zero-based. Fibers of `FiberGroup { mode }` run along
//! axis `mode` and are indexed by the two remaining axes. Slices of
//! `SliceFrob { axes: [a, b] }` and `SliceNuclear { axes: [a, b] }` are the
//! matrices with rows on axis `a` and columns on axis `b`, indexed by the
//! remaining axis.

mod decomposability;
mod subspace;

pub use decomposability::{analytic_compatibility, compatibility, decomposability_margin, Compatibility, CompatibilityOptions};
pub use subspace::{ProjectorRole, SubspaceSpec, Which};

use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::math;
use crate::spectral::{hopm_spectral, HopmOptions};
use crate::tensor::{self, DenseTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegularizerSpec {
    /// Sum of absolute entries.
    EntryL1,
    /// Sum of ℓ2 norms of the fibers along `mode`.
    FiberGroup { mode: usize },
    /// Sum of Frobenius norms of the slices spanned by `axes`.
    SliceFrob { axes: [usize; 2] },
    /// Sum of nuclear norms of the slices spanned by `axes`.
    SliceNuclear { axes: [usize; 2] },
    /// `(1/3) Σ_k ‖M_k(A)‖_*` over the three unfoldings.
    MatricizedNuclearSum,
    /// Tensor nuclear norm; only its dual, the tensor spectral norm, is
    /// available.
    TensorSpectralDualOnly,
}

impl RegularizerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            RegularizerSpec::EntryL1 => "entry_l1",
            RegularizerSpec::FiberGroup { .. } => "fiber_group",
            RegularizerSpec::SliceFrob { .. } => "slice_frob",
            RegularizerSpec::SliceNuclear { .. } => "slice_nuclear",
            RegularizerSpec::MatricizedNuclearSum => "matricized_nuclear_sum",
            RegularizerSpec::TensorSpectralDualOnly => "tensor_spectral_dual_only",
        }
    }

    /// Weak decomposability constant.
    pub fn c_r(&self) -> f64 {
        match self {
            RegularizerSpec::TensorSpectralDualOnly => 0.5,
            _ => 1.0,
        }
    }

    pub fn has_primal(&self) -> bool {
        !matches!(self, RegularizerSpec::TensorSpectralDualOnly)
    }

    pub fn has_closed_form_prox(&self) -> bool {
        matches!(
            self,
            RegularizerSpec::EntryL1
                | RegularizerSpec::FiberGroup { .. }
                | RegularizerSpec::SliceFrob { .. }
                | RegularizerSpec::SliceNuclear { .. }
        )
    }

    /// Check the structural parameters against a tensor shape.
    pub fn validate(&self, shape: &[usize]) -> Result<()> {
        match self {
            RegularizerSpec::EntryL1 => Ok(()),
            _ if shape.len() != 3 => Err(Error::OrderMismatch { expected: 3, found: shape.len() }),
            RegularizerSpec::FiberGroup { mode } if *mode >= 3 => {
                Err(Error::InvalidAxes(alloc::format!("fiber mode {mode} out of range")))
            }
            RegularizerSpec::SliceFrob { axes } | RegularizerSpec::SliceNuclear { axes }
                if axes[0] >= 3 || axes[1] >= 3 || axes[0] == axes[1] =>
            {
                Err(Error::InvalidAxes(alloc::format!("slice axes {axes:?} invalid")))
            }
            _ => Ok(()),
        }
    }

    /// `R(A)`.
    pub fn eval(&self, a: &DenseTensor) -> Result<f64> {
        self.validate(a.shape())?;
        match *self {
            RegularizerSpec::EntryL1 => Ok(a.data().iter().map(|v| v.abs()).sum()),
            RegularizerSpec::FiberGroup { mode } => {
                let fibers = Fibers::new(a.shape(), mode);
                Ok(fibers.norms(a.data()).iter().sum())
            }
            RegularizerSpec::SliceFrob { axes } => {
                let slices = Slices::new(a.shape(), axes);
                Ok(slices.frobenius_norms(a.data()).iter().sum())
            }
            RegularizerSpec::SliceNuclear { axes } => {
                let slices = Slices::new(a.shape(), axes);
                let mut total = 0.0;
                for c in 0..slices.count {
                    total += linalg::nuclear_norm(&slices.matrix(a.data(), c))?;
                }
                Ok(total)
            }
            RegularizerSpec::MatricizedNuclearSum => {
                let mut total = 0.0;
                for k in 0..3 {
                    total += linalg::nuclear_norm(&tensor::matricize(a, &[k])?)?;
                }
                Ok(total / 3.0)
            }
            RegularizerSpec::TensorSpectralDualOnly => Err(Error::UnsupportedKind("tensor_spectral_dual_only")),
        }
    }

    /// `R*(B) = sup_{R(A) ≤ 1} <A, B>`.
    ///
    /// Exact for all kinds except `TensorSpectralDualOnly`, where the value
    /// is the best higher-order power method objective (a lower bound).
    pub fn dual(&self, b: &DenseTensor, opts: &HopmOptions) -> Result<f64> {
        self.validate(b.shape())?;
        match *self {
            RegularizerSpec::TensorSpectralDualOnly => {
                if b.is_zero() {
                    return Ok(0.0);
                }
                Ok(hopm_spectral(b, opts)?.value)
            }
            RegularizerSpec::MatricizedNuclearSum => {
                let mut best = 0.0f64;
                for k in 0..3 {
                    best = best.max(linalg::spectral_norm(&tensor::matricize(b, &[k])?)?);
                }
                Ok(3.0 * best)
            }
            _ => Ok(self.dual_argmax(b)?.0),
        }
    }

    /// Dual norm together with the maximizing group (entry offset, fiber
    /// number or slice number); ties resolve to the first in layout order.
    /// Defined for the max-type kinds.
    pub fn dual_argmax(&self, b: &DenseTensor) -> Result<(f64, usize)> {
        self.validate(b.shape())?;
        let values: Vec<f64> = match *self {
            RegularizerSpec::EntryL1 => b.data().iter().map(|v| v.abs()).collect(),
            RegularizerSpec::FiberGroup { mode } => Fibers::new(b.shape(), mode).norms(b.data()),
            RegularizerSpec::SliceFrob { axes } => Slices::new(b.shape(), axes).frobenius_norms(b.data()),
            RegularizerSpec::SliceNuclear { axes } => {
                let slices = Slices::new(b.shape(), axes);
                (0..slices.count)
                    .map(|c| linalg::spectral_norm(&slices.matrix(b.data(), c)))
                    .collect::<Result<Vec<_>>>()?
            }
            _ => return Err(Error::UnsupportedKind(self.name())),
        };
        Ok(first_argmax(&values))
    }

    /// Tensor `Â` with `R(Â) = 1` and `<Â, B> = R*(B)`, for the max-type
    /// kinds.
    pub fn dual_maximizer(&self, b: &DenseTensor) -> Result<DenseTensor> {
        let (value, arg) = self.dual_argmax(b)?;
        let mut out = DenseTensor::zeros(b.shape());
        if value == 0.0 {
            // any unit-norm atom attains 0
            let mut data = out.into_data();
            data[0] = 1.0;
            return Ok(DenseTensor::from_parts(b.shape().to_vec(), data));
        }
        let data = b.data();
        let mut buf = out.data().to_vec();
        match *self {
            RegularizerSpec::EntryL1 => buf[arg] = data[arg].signum(),
            RegularizerSpec::FiberGroup { mode } => {
                let fibers = Fibers::new(b.shape(), mode);
                for off in fibers.offsets(arg) {
                    buf[off] = data[off] / value;
                }
            }
            RegularizerSpec::SliceFrob { axes } => {
                let slices = Slices::new(b.shape(), axes);
                for off in slices.offsets(arg) {
                    buf[off] = data[off] / value;
                }
            }
            RegularizerSpec::SliceNuclear { axes } => {
                let slices = Slices::new(b.shape(), axes);
                let s = linalg::svd(&slices.matrix(data, arg))?;
                let top = s.u.column(0) * s.v_t.row(0);
                slices.write(&mut buf, arg, &top);
            }
            _ => return Err(Error::UnsupportedKind(self.name())),
        }
        out = DenseTensor::from_parts(b.shape().to_vec(), buf);
        Ok(out)
    }

    /// `argmin_X ½‖X − Z‖_F² + t·R(X)`.
    pub fn prox(&self, z: &DenseTensor, t: f64) -> Result<DenseTensor> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidConfig(alloc::format!("prox parameter must be positive, got {t}")));
        }
        self.validate(z.shape())?;
        let mut out = z.data().to_vec();
        match *self {
            RegularizerSpec::EntryL1 => {
                for v in out.iter_mut() {
                    *v = math::soft_threshold(*v, t);
                }
            }
            RegularizerSpec::FiberGroup { mode } => {
                let fibers = Fibers::new(z.shape(), mode);
                let norms = fibers.norms(z.data());
                for (g, norm) in norms.iter().enumerate() {
                    let factor = block_shrink_factor(*norm, t);
                    for off in fibers.offsets(g) {
                        out[off] *= factor;
                    }
                }
            }
            RegularizerSpec::SliceFrob { axes } => {
                let slices = Slices::new(z.shape(), axes);
                let norms = slices.frobenius_norms(z.data());
                for (c, norm) in norms.iter().enumerate() {
                    let factor = block_shrink_factor(*norm, t);
                    for off in slices.offsets(c) {
                        out[off] *= factor;
                    }
                }
            }
            RegularizerSpec::SliceNuclear { axes } => {
                let slices = Slices::new(z.shape(), axes);
                for c in 0..slices.count {
                    let shrunk = linalg::svt(&slices.matrix(z.data(), c), t)?;
                    slices.write(&mut out, c, &shrunk);
                }
            }
            RegularizerSpec::MatricizedNuclearSum => return Err(Error::NoClosedFormProx("matricized_nuclear_sum")),
            RegularizerSpec::TensorSpectralDualOnly => {
                return Err(Error::NoClosedFormProx("tensor_spectral_dual_only"))
            }
        }
        Ok(DenseTensor::from_parts(z.shape().to_vec(), out))
    }

    /// An element of the subdifferential `∂R(A)`: the minimal-norm choice at
    /// zero blocks.
    pub fn subgradient(&self, a: &DenseTensor) -> Result<DenseTensor> {
        self.validate(a.shape())?;
        let data = a.data();
        let mut out = alloc::vec![0.0; a.len()];
        match *self {
            RegularizerSpec::EntryL1 => {
                for (o, v) in out.iter_mut().zip(data) {
                    *o = if *v > 0.0 {
                        1.0
                    } else if *v < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                }
            }
            RegularizerSpec::FiberGroup { mode } => {
                let fibers = Fibers::new(a.shape(), mode);
                for (g, norm) in fibers.norms(data).into_iter().enumerate() {
                    if norm > 0.0 {
                        for off in fibers.offsets(g) {
                            out[off] = data[off] / norm;
                        }
                    }
                }
            }
            RegularizerSpec::SliceFrob { axes } => {
                let slices = Slices::new(a.shape(), axes);
                for (c, norm) in slices.frobenius_norms(data).into_iter().enumerate() {
                    if norm > 0.0 {
                        for off in slices.offsets(c) {
                            out[off] = data[off] / norm;
                        }
                    }
                }
            }
            RegularizerSpec::SliceNuclear { axes } => {
                let slices = Slices::new(a.shape(), axes);
                for c in 0..slices.count {
                    let g = linalg::nuclear_subgradient(&slices.matrix(data, c))?;
                    slices.write(&mut out, c, &g);
                }
            }
            RegularizerSpec::MatricizedNuclearSum => {
                for k in 0..3 {
                    let g = linalg::nuclear_subgradient(&tensor::matricize(a, &[k])?)?;
                    let g = tensor::dematricize(&g, a.shape(), &[k])?;
                    for (o, v) in out.iter_mut().zip(g.data()) {
                        *o += v / 3.0;
                    }
                }
            }
            RegularizerSpec::TensorSpectralDualOnly => return Err(Error::UnsupportedKind("tensor_spectral_dual_only")),
        }
        Ok(DenseTensor::from_parts(a.shape().to_vec(), out))
    }
}

fn block_shrink_factor(norm: f64, t: f64) -> f64 {
    if norm <= t {
        0.0
    } else {
        1.0 - t / norm
    }
}

fn first_argmax(values: &[f64]) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, &v) in values.iter().enumerate() {
        if v > best.0 {
            best = (v, i);
        }
    }
    if values.is_empty() {
        (0.0, 0)
    } else {
        best
    }
}

/// First-order optimality certificate for `min f(A) + λR(A)` given
/// `grad = ∇f(A)`:
///
/// `max(0, R*(grad) − λ) + |<grad, A> + λR(A)| / (1 + R(A))`.
///
/// It vanishes exactly when `−grad ∈ λ∂R(A)`.
pub fn kkt_certificate(
    spec: &RegularizerSpec,
    grad: &DenseTensor,
    a: &DenseTensor,
    lambda: f64,
    opts: &HopmOptions,
) -> Result<f64> {
    let r = spec.eval(a)?;
    let dual = spec.dual(grad, opts)?;
    let align = grad.dot(a)? + lambda * r;
    Ok((dual - lambda).max(0.0) + align.abs() / (1.0 + r))
}

/// Fibers along one axis of a third-order tensor.
pub(crate) struct Fibers {
    bases: Vec<usize>,
    stride: usize,
    len: usize,
}

impl Fibers {
    pub(crate) fn new(shape: &[usize], mode: usize) -> Self {
        let strides = tensor::strides(shape);
        let others: Vec<usize> = (0..shape.len()).filter(|&k| k != mode).collect();
        let mut bases = Vec::new();
        let (o1, o2) = (others[0], others[1]);
        for i in 0..shape[o1] {
            for j in 0..shape[o2] {
                bases.push(i * strides[o1] + j * strides[o2]);
            }
        }
        Self { bases, stride: strides[mode], len: shape[mode] }
    }

    pub(crate) fn count(&self) -> usize {
        self.bases.len()
    }

    pub(crate) fn offsets(&self, g: usize) -> impl Iterator<Item = usize> + '_ {
        let base = self.bases[g];
        (0..self.len).map(move |i| base + i * self.stride)
    }

    pub(crate) fn norms(&self, data: &[f64]) -> Vec<f64> {
        (0..self.count())
            .map(|g| math::sqrt(self.offsets(g).map(|o| data[o] * data[o]).sum()))
            .collect()
    }
}

/// Matrix slices of a third-order tensor.
pub(crate) struct Slices {
    pub(crate) count: usize,
    rows: usize,
    cols: usize,
    row_stride: usize,
    col_stride: usize,
    slice_stride: usize,
}

impl Slices {
    pub(crate) fn new(shape: &[usize], axes: [usize; 2]) -> Self {
        let strides = tensor::strides(shape);
        let c = 3 - axes[0] - axes[1];
        Self {
            count: shape[c],
            rows: shape[axes[0]],
            cols: shape[axes[1]],
            row_stride: strides[axes[0]],
            col_stride: strides[axes[1]],
            slice_stride: strides[c],
        }
    }

    pub(crate) fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub(crate) fn offset(&self, c: usize, i: usize, j: usize) -> usize {
        c * self.slice_stride + i * self.row_stride + j * self.col_stride
    }

    pub(crate) fn offsets(&self, c: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.rows).flat_map(move |i| (0..self.cols).map(move |j| self.offset(c, i, j)))
    }

    pub(crate) fn matrix(&self, data: &[f64], c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| data[self.offset(c, i, j)])
    }

    pub(crate) fn write(&self, data: &mut [f64], c: usize, m: &DMatrix<f64>) {
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[self.offset(c, i, j)] = m[(i, j)];
            }
        }
    }

    pub(crate) fn frobenius_norms(&self, data: &[f64]) -> Vec<f64> {
        (0..self.count)
            .map(|c| math::sqrt(self.offsets(c).map(|o| data[o] * data[o]).sum()))
            .collect()
    }
}
