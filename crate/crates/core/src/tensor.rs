//! Dense order-N tensors.
//!
//! Entries are stored in a flat buffer in row-major order: the last index
//! varies fastest. Offsets follow `sum_k j_k * stride_k` with
//! `stride_{N-1} = 1` and `stride_k = stride_{k+1} * d_{k+1}`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor", into = "RawTensor")]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl TryFrom<RawTensor> for DenseTensor {
    type Error = Error;

    fn try_from(raw: RawTensor) -> Result<Self> {
        DenseTensor::new(raw.shape, raw.data)
    }
}

impl From<DenseTensor> for RawTensor {
    fn from(t: DenseTensor) -> Self {
        RawTensor { shape: t.shape, data: t.data }
    }
}

/// Result of the partial inner product `<A, B>`.
#[derive(Debug, Clone, PartialEq)]
pub enum Inner {
    Scalar(f64),
    Tensor(DenseTensor),
}

impl Inner {
    /// Flattened view: a scalar becomes a length-one vector.
    pub fn into_vec(self) -> Vec<f64> {
        match self {
            Inner::Scalar(v) => vec![v],
            Inner::Tensor(t) => t.data,
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Inner::Scalar(v) => Some(*v),
            Inner::Tensor(_) => None,
        }
    }
}

pub fn num_elements(shape: &[usize]) -> usize {
    shape.iter().product()
}

pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * shape[k + 1];
    }
    strides
}

/// Decode a flat offset into a multi-index.
pub fn unravel(mut offset: usize, shape: &[usize], out: &mut [usize]) {
    for k in (0..shape.len()).rev() {
        out[k] = offset % shape[k];
        offset /= shape[k];
    }
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::InvalidConfig(alloc::format!(
            "tensor extents must be positive and non-empty, got {shape:?}"
        )));
    }
    Ok(())
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        validate_shape(&shape)?;
        let expected = num_elements(&shape);
        if data.len() != expected {
            return Err(Error::LengthMismatch { expected, found: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        assert!(!shape.is_empty() && !shape.contains(&0), "extents must be positive");
        Self { shape: shape.to_vec(), data: vec![0.0; num_elements(shape)] }
    }

    /// Build from a closure over multi-indices, visited in layout order.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        validate_shape(shape)?;
        let len = num_elements(shape);
        let mut idx = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(len);
        for off in 0..len {
            unravel(off, shape, &mut idx);
            data.push(f(&idx));
        }
        Self::new(shape.to_vec(), data)
    }

    /// Indicator tensor with a single one at `index`.
    pub fn indicator(shape: &[usize], index: &[usize]) -> Self {
        let mut t = Self::zeros(shape);
        let off = t.offset(index);
        t.data[off] = 1.0;
        t
    }

    /// Internal constructor for buffers produced by finite arithmetic.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(num_elements(&shape), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.shape)
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index order mismatch");
        let mut off = 0;
        for (k, (&j, &d)) in index.iter().zip(&self.shape).enumerate() {
            assert!(j < d, "index {j} out of range on axis {k}");
            off = off * d + j;
        }
        off
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        assert!(value.is_finite(), "non-finite entry");
        let off = self.offset(index);
        self.data[off] = value;
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        validate_shape(shape)?;
        if num_elements(shape) != self.len() {
            return Err(Error::ShapeMismatch { expected: self.shape.clone(), found: shape.to_vec() });
        }
        Ok(Self { shape: shape.to_vec(), data: self.data.clone() })
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch { expected: self.shape.clone(), found: other.shape.clone() });
        }
        Ok(())
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self::from_parts(self.shape.clone(), self.data.iter().map(|v| alpha * v).collect())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.axpy(-1.0, other)
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + alpha * b).collect();
        Ok(Self::from_parts(self.shape.clone(), data))
    }

    pub fn add_assign_scaled(&mut self, alpha: f64, other: &Self) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    /// Full inner product of equally shaped tensors.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(dot(&self.data, &other.data))
    }

    pub fn frobenius_sq(&self) -> f64 {
        dot(&self.data, &self.data)
    }

    pub fn frobenius(&self) -> f64 {
        math::sqrt(self.frobenius_sq())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// Reorder axes: axis `k` of the result is axis `axes[k]` of `self`.
    pub fn permute(&self, axes: &[usize]) -> Result<Self> {
        check_permutation(axes, self.order())?;
        let new_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let old_strides = self.strides();
        let src_strides: Vec<usize> = axes.iter().map(|&a| old_strides[a]).collect();
        let mut data = Vec::with_capacity(self.len());
        let mut idx = vec![0usize; new_shape.len()];
        for off in 0..self.len() {
            unravel(off, &new_shape, &mut idx);
            let src: usize = idx.iter().zip(&src_strides).map(|(i, s)| i * s).sum();
            data.push(self.data[src]);
        }
        Ok(Self::from_parts(new_shape, data))
    }

    /// Multiply along `mode` by `m` (shape `r x d_mode`): the mode extent
    /// becomes `r`.
    pub fn mode_product(&self, mode: usize, m: &DMatrix<f64>) -> Result<Self> {
        if mode >= self.order() {
            return Err(Error::InvalidAxes(alloc::format!("mode {mode} out of range")));
        }
        let d = self.shape[mode];
        if m.ncols() != d {
            return Err(Error::ShapeMismatch { expected: vec![m.nrows(), d], found: vec![m.nrows(), m.ncols()] });
        }
        let r = m.nrows();
        let outer: usize = self.shape[..mode].iter().product();
        let inner: usize = self.shape[mode + 1..].iter().product();
        let mut new_shape = self.shape.clone();
        new_shape[mode] = r;
        let mut out = vec![0.0; outer * r * inner];
        for o in 0..outer {
            let src = &self.data[o * d * inner..(o + 1) * d * inner];
            let dst = &mut out[o * r * inner..(o + 1) * r * inner];
            for i in 0..r {
                let drow = &mut dst[i * inner..(i + 1) * inner];
                for j in 0..d {
                    let c = m[(i, j)];
                    if c == 0.0 {
                        continue;
                    }
                    let srow = &src[j * inner..(j + 1) * inner];
                    for (x, y) in drow.iter_mut().zip(srow) {
                        *x += c * y;
                    }
                }
            }
        }
        Ok(Self::from_parts(new_shape, out))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_permutation(axes: &[usize], order: usize) -> Result<()> {
    if axes.len() != order {
        return Err(Error::InvalidAxes(alloc::format!("expected {order} axes, got {}", axes.len())));
    }
    let mut seen = vec![false; order];
    for &a in axes {
        if a >= order || seen[a] {
            return Err(Error::InvalidAxes(alloc::format!("{axes:?} is not a permutation")));
        }
        seen[a] = true;
    }
    Ok(())
}

fn check_mode_subset(modes: &[usize], order: usize) -> Result<Vec<usize>> {
    if modes.is_empty() || modes.len() >= order {
        return Err(Error::InvalidAxes(alloc::format!(
            "mode set {modes:?} must be a non-empty proper subset of {order} axes"
        )));
    }
    let mut seen = vec![false; order];
    for &m in modes {
        if m >= order || seen[m] {
            return Err(Error::InvalidAxes(alloc::format!("mode set {modes:?} has out-of-range or duplicate axes")));
        }
        seen[m] = true;
    }
    let mut perm = modes.to_vec();
    perm.extend((0..order).filter(|k| !seen[*k]));
    Ok(perm)
}

/// Partial inner product contracting the leading axes of `b` against `a`.
///
/// `a.shape()` must be a prefix of `b.shape()`. Equal shapes give a scalar;
/// otherwise the result has the trailing shape of `b`.
pub fn inner(a: &DenseTensor, b: &DenseTensor) -> Result<Inner> {
    let m = a.order();
    if m > b.order() || a.shape() != &b.shape()[..m] {
        return Err(Error::ShapeMismatch { expected: b.shape().to_vec(), found: a.shape().to_vec() });
    }
    if m == b.order() {
        return Ok(Inner::Scalar(dot(a.data(), b.data())));
    }
    let rest_shape = b.shape()[m..].to_vec();
    let rest = num_elements(&rest_shape);
    Ok(Inner::Tensor(DenseTensor::from_parts(rest_shape, contract_prefix(a.data(), b.data(), rest))))
}

/// `out[k] = sum_i a[i] * b[i * rest + k]`.
pub(crate) fn contract_prefix(a: &[f64], b: &[f64], rest: usize) -> Vec<f64> {
    let mut out = vec![0.0; rest];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (o, bv) in out.iter_mut().zip(&b[i * rest..(i + 1) * rest]) {
            *o += ai * bv;
        }
    }
    out
}

/// Unfold `a` into a matrix whose rows are indexed by the axes in `modes`
/// (in the given order) and whose columns are indexed by the remaining axes
/// in increasing order; within each group the last axis varies fastest.
///
/// `matricize(a, &[k])` is the mode-k unfolding; its columns are the mode-k
/// fibers.
pub fn matricize(a: &DenseTensor, modes: &[usize]) -> Result<DMatrix<f64>> {
    let perm = check_mode_subset(modes, a.order())?;
    let rows: usize = modes.iter().map(|&k| a.shape()[k]).product();
    let cols = a.len() / rows;
    let p = a.permute(&perm)?;
    Ok(DMatrix::from_row_slice(rows, cols, p.data()))
}

/// Inverse of [`matricize`] for a tensor of shape `shape`.
pub fn dematricize(m: &DMatrix<f64>, shape: &[usize], modes: &[usize]) -> Result<DenseTensor> {
    validate_shape(shape)?;
    let perm = check_mode_subset(modes, shape.len())?;
    let rows: usize = modes.iter().map(|&k| shape[k]).product();
    let total = num_elements(shape);
    if m.nrows() != rows || m.ncols() * rows != total {
        return Err(Error::ShapeMismatch {
            expected: vec![rows, total / rows],
            found: vec![m.nrows(), m.ncols()],
        });
    }
    let permuted_shape: Vec<usize> = perm.iter().map(|&k| shape[k]).collect();
    let mut data = Vec::with_capacity(total);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            data.push(m[(i, j)]);
        }
    }
    let permuted = DenseTensor::new(permuted_shape, data)?;
    let mut inverse = vec![0usize; perm.len()];
    for (pos, &axis) in perm.iter().enumerate() {
        inverse[axis] = pos;
    }
    permuted.permute(&inverse)
}

/// Rank-one tensor `u ⊗ v ⊗ w`.
pub fn outer3(u: &[f64], v: &[f64], w: &[f64]) -> Result<DenseTensor> {
    outer(&[u, v, w])
}

/// Rank-one tensor from any number of factor vectors.
pub fn outer(factors: &[&[f64]]) -> Result<DenseTensor> {
    let shape: Vec<usize> = factors.iter().map(|f| f.len()).collect();
    validate_shape(&shape)?;
    let mut data = vec![1.0];
    for f in factors {
        let mut next = Vec::with_capacity(data.len() * f.len());
        for &a in &data {
            next.extend(f.iter().map(|&b| a * b));
        }
        data = next;
    }
    DenseTensor::new(shape, data)
}
