//! Synthetic truths for the sparse and low-rank model classes and
//! regression problems built from them.

mod var;

pub use var::{gen_var_series, var_spectral_extrema, SpectralExtrema, VarModel, VarSeries};

use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::projector::ProjectorTriple;
use crate::regularizer::Slices;
use crate::rng::{self, StreamRng};
use crate::solver::{pairwise_components, pairwise_tensor, RegressionProblem};
use crate::tensor::{self, DenseTensor};

/// Relative singular value cutoff used by the membership certificates.
pub const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum ModelClass {
    /// At most `s` nonzero entries.
    Theta1 { s: usize },
    /// At most `s` nonzero fibers along `mode`.
    Theta2 { s: usize, mode: usize },
    /// At most `s` nonzero slices spanned by `axes`.
    Theta3 { s: usize, axes: [usize; 2] },
    /// Slice ranks summing to at most `r`.
    Theta4 { r: usize, axes: [usize; 2] },
    /// All Tucker ranks at most `r`.
    Theta5 { r: usize },
    /// Multi-response, `s` relevant features: shape `(p, m, m)`, nonzero
    /// `m x m` slices indexed by the feature.
    T1 { s: usize },
    /// Multi-response, slice ranks summing to at most `r`; shape `(p, m, m)`.
    T2 { r: usize },
    /// Autoregressive, `s` nonzero lag fibers; shape `(m, p, m)` with fibers
    /// along the lag axis.
    T3 { s: usize },
    /// Pairwise interactions with centered components of rank at most `r`.
    T4 { r: usize },
}

/// The structural constraint behind each class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Structure {
    Entries(usize),
    Fibers(usize, usize),
    Slices(usize, [usize; 2]),
    SliceRank(usize, [usize; 2]),
    Tucker(usize),
    Pairwise(usize),
}

impl ModelClass {
    fn structure(self) -> Structure {
        match self {
            ModelClass::Theta1 { s } => Structure::Entries(s),
            ModelClass::Theta2 { s, mode } => Structure::Fibers(s, mode),
            ModelClass::T3 { s } => Structure::Fibers(s, 1),
            ModelClass::Theta3 { s, axes } => Structure::Slices(s, axes),
            ModelClass::T1 { s } => Structure::Slices(s, [1, 2]),
            ModelClass::Theta4 { r, axes } => Structure::SliceRank(r, axes),
            ModelClass::T2 { r } => Structure::SliceRank(r, [1, 2]),
            ModelClass::Theta5 { r } => Structure::Tucker(r),
            ModelClass::T4 { r } => Structure::Pairwise(r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelClassSpec {
    #[serde(flatten)]
    pub class: ModelClass,
    pub shape: Vec<usize>,
    /// Entry magnitude for the sparsity classes, Frobenius norm of each
    /// component for the rank classes.
    #[serde(default = "unit")]
    pub magnitude: f64,
}

fn unit() -> f64 {
    1.0
}

impl ModelClassSpec {
    pub fn new(class: ModelClass, shape: &[usize]) -> Self {
        Self { class, shape: shape.to_vec(), magnitude: 1.0 }
    }

    fn infeasible(&self, why: &str) -> Error {
        Error::InfeasibleClass(alloc::format!("{:?} on shape {:?}: {why}", self.class, self.shape))
    }

    fn check(&self) -> Result<()> {
        let s = &self.shape;
        if s.len() != 3 || s.contains(&0) {
            return Err(self.infeasible("shape must have three positive extents"));
        }
        if !(self.magnitude > 0.0) || !self.magnitude.is_finite() {
            return Err(self.infeasible("magnitude must be positive"));
        }
        let bad_axes = |a: [usize; 2]| a[0] >= 3 || a[1] >= 3 || a[0] == a[1];
        let ok = match self.class {
            ModelClass::Theta1 { s: k } => k <= s.iter().product(),
            ModelClass::Theta2 { s: k, mode } => mode < 3 && k <= s.iter().product::<usize>() / s[mode],
            ModelClass::Theta3 { s: k, axes } => !bad_axes(axes) && k <= s[3 - axes[0] - axes[1]],
            ModelClass::Theta4 { r, axes } => {
                !bad_axes(axes) && r <= s[3 - axes[0] - axes[1]] * s[axes[0]].min(s[axes[1]])
            }
            ModelClass::Theta5 { r } => r <= *s.iter().min().unwrap_or(&0),
            ModelClass::T1 { s: k } => s[1] == s[2] && k <= s[0],
            ModelClass::T2 { r } => s[1] == s[2] && r <= s[0] * s[1],
            ModelClass::T3 { s: k } => s[0] == s[2] && k <= s[0] * s[2],
            ModelClass::T4 { r } => r >= 1 && s.iter().all(|&d| d >= 2) && r < *s.iter().min().unwrap_or(&0),
        };
        if ok {
            Ok(())
        } else {
            Err(self.infeasible("class parameters exceed the shape"))
        }
    }
}

fn random_sign(r: &mut StreamRng, magnitude: f64) -> f64 {
    if r.random::<bool>() {
        magnitude
    } else {
        -magnitude
    }
}

fn orthonormal_columns(r: &mut StreamRng, d: usize, k: usize) -> Result<DMatrix<f64>> {
    loop {
        let g = DMatrix::from_fn(d, k, |_, _| rng::standard_normal(r));
        let q = linalg::orthonormal_basis(&g)?;
        if q.ncols() == k {
            return Ok(q);
        }
    }
}

/// Random `rows x cols` matrix of rank exactly `rank` with Frobenius norm
/// `norm` (zero when `rank == 0`).
fn low_rank_matrix(r: &mut StreamRng, rows: usize, cols: usize, rank: usize, norm: f64) -> Result<DMatrix<f64>> {
    if rank == 0 {
        return Ok(DMatrix::zeros(rows, cols));
    }
    let u = orthonormal_columns(r, rows, rank)?;
    let v = orthonormal_columns(r, cols, rank)?;
    let sv: Vec<f64> = (0..rank).map(|_| 0.5 + r.random::<f64>()).collect();
    let m = &u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(sv)) * v.transpose();
    let f = m.norm();
    Ok(m * (norm / f))
}

fn centering(d: usize) -> DMatrix<f64> {
    DMatrix::identity(d, d) - DMatrix::from_element(d, d, 1.0 / d as f64)
}

/// Draw a truth from the class and certify its membership.
pub fn gen_truth(spec: &ModelClassSpec, seed: u64) -> Result<DenseTensor> {
    spec.check()?;
    let shape = spec.shape.as_slice();
    let mag = spec.magnitude;
    let mut r = rng::substream(seed, 0);
    let mut data = alloc::vec![0.0; tensor::num_elements(shape)];
    match spec.class.structure() {
        Structure::Entries(s) => {
            for off in index::sample(&mut r, data.len(), s).into_vec() {
                data[off] = random_sign(&mut r, mag);
            }
        }
        Structure::Fibers(s, mode) => {
            let fibers = crate::regularizer::Fibers::new(shape, mode);
            for g in index::sample(&mut r, fibers.count(), s).into_vec() {
                for off in fibers.offsets(g) {
                    data[off] = random_sign(&mut r, mag);
                }
            }
        }
        Structure::Slices(s, axes) => {
            let slices = Slices::new(shape, axes);
            for c in index::sample(&mut r, slices.count, s).into_vec() {
                for off in slices.offsets(c) {
                    data[off] = random_sign(&mut r, mag);
                }
            }
        }
        Structure::SliceRank(rank, axes) => {
            let slices = Slices::new(shape, axes);
            let (rows, cols) = slices.dims();
            let cap = rows.min(cols);
            // spread the rank budget over distinct slices, one unit at a time
            let mut budget = alloc::vec![0usize; slices.count];
            let order = index::sample(&mut r, slices.count, slices.count).into_vec();
            let mut left = rank;
            'fill: while left > 0 {
                for &c in &order {
                    if left == 0 {
                        break 'fill;
                    }
                    if budget[c] < cap {
                        budget[c] += 1;
                        left -= 1;
                    }
                }
            }
            for c in 0..slices.count {
                if budget[c] > 0 {
                    let m = low_rank_matrix(&mut r, rows, cols, budget[c], mag)?;
                    slices.write(&mut data, c, &m);
                }
            }
        }
        Structure::Tucker(rank) => {
            if rank > 0 {
                let factors: Vec<DMatrix<f64>> =
                    (0..3).map(|k| orthonormal_columns(&mut r, shape[k], rank)).collect::<Result<_>>()?;
                // a core with full-rank unfoldings
                let core = loop {
                    let c = rng::normal_tensor(&mut r, &[rank, rank, rank]);
                    let full = (0..3).all(|k| {
                        tensor::matricize(&c, &[k]).and_then(|m| linalg::rank(&m, RANK_TOL)).ok() == Some(rank)
                    });
                    if full {
                        break c;
                    }
                };
                let mut t = core;
                for (k, f) in factors.iter().enumerate() {
                    t = t.mode_product(k, f)?;
                }
                let norm = t.frobenius();
                data = t.scale(mag / norm).into_data();
            }
        }
        Structure::Pairwise(rank) => {
            let comps: [DMatrix<f64>; 3] = {
                let dims = [(shape[0], shape[1]), (shape[0], shape[2]), (shape[1], shape[2])];
                let mut out: [DMatrix<f64>; 3] = core::array::from_fn(|_| DMatrix::zeros(0, 0));
                for (k, &(a, b)) in dims.iter().enumerate() {
                    // rank-r factors drawn in the centered subspaces
                    let u = centering(a) * DMatrix::from_fn(a, rank, |_, _| rng::standard_normal(&mut r));
                    let v = centering(b) * DMatrix::from_fn(b, rank, |_, _| rng::standard_normal(&mut r));
                    let m = u * v.transpose();
                    let f = m.norm();
                    out[k] = m * (mag / f);
                }
                out
            };
            data = pairwise_tensor(&comps)?.into_data();
        }
    }
    let truth = DenseTensor::new(shape.to_vec(), data)?;
    certify(spec, &truth)?;
    Ok(truth)
}

/// Exact membership checks: support counts, slice and Tucker ranks,
/// centering of pairwise components.
pub fn certify(spec: &ModelClassSpec, t: &DenseTensor) -> Result<()> {
    if t.shape() != spec.shape.as_slice() {
        return Err(Error::ShapeMismatch { expected: spec.shape.clone(), found: t.shape().to_vec() });
    }
    let fail = |why: alloc::string::String| Err(spec.infeasible(&why));
    match spec.class.structure() {
        Structure::Entries(s) => {
            let nnz = t.data().iter().filter(|v| **v != 0.0).count();
            if nnz > s {
                return fail(alloc::format!("{nnz} nonzero entries"));
            }
        }
        Structure::Fibers(s, mode) => {
            let nz = crate::regularizer::Fibers::new(t.shape(), mode).norms(t.data()).iter().filter(|v| **v > 0.0).count();
            if nz > s {
                return fail(alloc::format!("{nz} nonzero fibers"));
            }
        }
        Structure::Slices(s, axes) => {
            let nz = Slices::new(t.shape(), axes).frobenius_norms(t.data()).iter().filter(|v| **v > 0.0).count();
            if nz > s {
                return fail(alloc::format!("{nz} nonzero slices"));
            }
        }
        Structure::SliceRank(r, axes) => {
            let sl = Slices::new(t.shape(), axes);
            let mut total = 0;
            for c in 0..sl.count {
                total += linalg::rank(&sl.matrix(t.data(), c), RANK_TOL)?;
            }
            if total > r {
                return fail(alloc::format!("slice ranks sum to {total}"));
            }
        }
        Structure::Tucker(r) => {
            for k in 0..3 {
                let rk = linalg::rank(&tensor::matricize(t, &[k])?, RANK_TOL)?;
                if rk > r {
                    return fail(alloc::format!("mode-{k} rank {rk}"));
                }
            }
        }
        Structure::Pairwise(r) => {
            let comps = pairwise_components(t)?;
            let rebuilt = pairwise_tensor(&comps)?;
            let scale = t.max_abs().max(1.0);
            if rebuilt.sub(t)?.max_abs() > 1e-12 * scale {
                return fail("not a sum of pairwise components".into());
            }
            for c in &comps {
                let sums = c.row_sum().amax().max(c.column_sum().amax());
                if sums > 1e-12 * scale {
                    return fail(alloc::format!("component not centered (max sum {sums:e})"));
                }
                let rk = linalg::rank(c, RANK_TOL)?;
                if rk > r {
                    return fail(alloc::format!("component rank {rk}"));
                }
            }
        }
    }
    Ok(())
}

/// Covariance of the vectorized covariates.
#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    Iid,
    /// `vec(X) = L z` with `z` standard normal, so `Σ = L Lᵀ`.
    Factor(DMatrix<f64>),
}

/// Draw `n` samples `Y_i = <X_i, T> + ε_i` where `X_i` spans the first
/// `split` axes of `T` and `ε_i` has i.i.d. `N(0, σ²)` entries.
pub fn gen_problem(
    truth: &DenseTensor,
    n: usize,
    split: usize,
    noise_sigma: f64,
    design: &Design,
    seed: u64,
) -> Result<RegressionProblem> {
    if n == 0 || split == 0 || split > truth.order() {
        return Err(Error::InvalidConfig(alloc::format!(
            "need n >= 1 and 1 <= split <= {} (n={n}, split={split})",
            truth.order()
        )));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::InvalidConfig(alloc::format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    let cov_shape = truth.shape()[..split].to_vec();
    let resp_shape = truth.shape()[split..].to_vec();
    let dm = tensor::num_elements(&cov_shape);
    let dr = tensor::num_elements(&resp_shape);
    if let Design::Factor(l) = design {
        if l.nrows() != dm || l.ncols() != dm || l.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadCovarianceFactor);
        }
    }
    let mut rx = rng::substream(seed, 0);
    let mut re = rng::substream(seed, 1);
    let mut x = Vec::with_capacity(n * dm);
    let mut y = Vec::with_capacity(n * dr);
    for _ in 0..n {
        let z = rng::normal_vec(&mut rx, dm);
        let xi: Vec<f64> = match design {
            Design::Iid => z,
            Design::Factor(l) => (l * nalgebra::DVector::from_vec(z)).as_slice().to_vec(),
        };
        let pred = tensor::contract_prefix(&xi, truth.data(), dr);
        for p in pred {
            y.push(p + noise_sigma * rng::standard_normal(&mut re));
        }
        x.extend(xi);
    }
    RegressionProblem::new(cov_shape, resp_shape, x, y, noise_sigma, Some(truth.clone()))
}

/// Tucker projectors of a truth from `Theta5`.
pub fn tucker_projectors(truth: &DenseTensor) -> Result<ProjectorTriple> {
    ProjectorTriple::from_tensor(truth)
}
