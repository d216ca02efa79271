//! Pairwise interaction models `T_{j1j2j3} = A12_{j1j2} + A13_{j1j3} +
//! A23_{j2j3}` with row- and column-centered components, fitted with the
//! penalty `Σ ‖A_k‖_*`.
//!
//! The unknowns are the three components; `<T, X>` only sees the reduced
//! covariates `Σ_{j3} X`, `Σ_{j2} X` and `Σ_{j1} X`.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::fista::{run_fista, Penalty};
use super::smooth::SmoothPart;
use super::{RegressionProblem, SolveResult, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::math;
use crate::rng;
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseSolution {
    /// Full coefficient tensor assembled from the components.
    pub result: SolveResult,
    pub components: [DMatrix<f64>; 3],
}

fn block_dims(shape: &[usize]) -> [(usize, usize); 3] {
    [(shape[0], shape[1]), (shape[0], shape[2]), (shape[1], shape[2])]
}

fn block_offsets(shape: &[usize]) -> [usize; 4] {
    let d = block_dims(shape);
    let mut off = [0usize; 4];
    for k in 0..3 {
        off[k + 1] = off[k] + d[k].0 * d[k].1;
    }
    off
}

/// Reduced covariates of one sample, concatenated block by block
/// (row-major within each block).
fn reduce(x: &[f64], shape: &[usize]) -> Vec<f64> {
    let (d1, d2, d3) = (shape[0], shape[1], shape[2]);
    let off = block_offsets(shape);
    let mut out = alloc::vec![0.0; off[3]];
    for i in 0..d1 {
        for j in 0..d2 {
            for k in 0..d3 {
                let v = x[(i * d2 + j) * d3 + k];
                out[i * d2 + j] += v;
                out[off[1] + i * d3 + k] += v;
                out[off[2] + j * d3 + k] += v;
            }
        }
    }
    out
}

/// Stacked reduced covariates, `n` rows.
pub fn pairwise_features(problem: &RegressionProblem) -> Result<Vec<f64>> {
    let shape = problem.covariate_shape();
    if shape.len() != 3 || !problem.response_shape().is_empty() {
        return Err(Error::InvalidConfig("pairwise models need order-3 covariates and scalar responses".into()));
    }
    let mut out = Vec::new();
    for i in 0..problem.n() {
        out.extend(reduce(problem.covariate_row(i), shape));
    }
    Ok(out)
}

fn center(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = (m.nrows(), m.ncols());
    let row_means: Vec<f64> = (0..r).map(|i| m.row(i).sum() / c as f64).collect();
    let col_means: Vec<f64> = (0..c).map(|j| m.column(j).sum() / r as f64).collect();
    let all = m.sum() / (r * c) as f64;
    DMatrix::from_fn(r, c, |i, j| m[(i, j)] - row_means[i] - col_means[j] + all)
}

fn blocks(w: &[f64], shape: &[usize]) -> [DMatrix<f64>; 3] {
    let d = block_dims(shape);
    let off = block_offsets(shape);
    core::array::from_fn(|k| DMatrix::from_row_slice(d[k].0, d[k].1, &w[off[k]..off[k + 1]]))
}

fn flatten(blocks: &[DMatrix<f64>; 3]) -> Vec<f64> {
    let mut out = Vec::new();
    for b in blocks {
        for i in 0..b.nrows() {
            for j in 0..b.ncols() {
                out.push(b[(i, j)]);
            }
        }
    }
    out
}

/// Assemble `T` from its three components.
pub fn pairwise_tensor(components: &[DMatrix<f64>; 3]) -> Result<DenseTensor> {
    let (d1, d2) = components[0].shape();
    let d3 = components[1].ncols();
    if components[1].nrows() != d1 || components[2].shape() != (d2, d3) {
        return Err(Error::ShapeMismatch {
            expected: alloc::vec![d1, d2, d3],
            found: alloc::vec![components[1].nrows(), components[2].nrows(), components[2].ncols()],
        });
    }
    DenseTensor::from_fn(&[d1, d2, d3], |ix| {
        components[0][(ix[0], ix[1])] + components[1][(ix[0], ix[2])] + components[2][(ix[1], ix[2])]
    })
}

/// Components of a tensor from the pairwise class: with centered
/// components, `A12` is the mean of `T` over axis 3, and so on.
pub fn pairwise_components(t: &DenseTensor) -> Result<[DMatrix<f64>; 3]> {
    if t.order() != 3 {
        return Err(Error::OrderMismatch { expected: 3, found: t.order() });
    }
    let s = t.shape();
    let (d1, d2, d3) = (s[0], s[1], s[2]);
    let mut out = [DMatrix::zeros(d1, d2), DMatrix::zeros(d1, d3), DMatrix::zeros(d2, d3)];
    for i in 0..d1 {
        for j in 0..d2 {
            for k in 0..d3 {
                let v = t.get(&[i, j, k]);
                out[0][(i, j)] += v / d3 as f64;
                out[1][(i, k)] += v / d2 as f64;
                out[2][(j, k)] += v / d1 as f64;
            }
        }
    }
    Ok(out)
}

/// `max_k ‖C g_k C‖_s` for reduced-coordinate gradients `g`.
fn block_dual(g: &[f64], shape: &[usize]) -> Result<f64> {
    let mut best = 0.0f64;
    for b in blocks(g, shape) {
        best = best.max(linalg::spectral_norm(&center(&b))?);
    }
    Ok(best)
}

/// Dual norm of the pairwise penalty at a tensor `G`: the largest spectral
/// norm of the double-centered reductions of `G`.
pub fn pairwise_dual(g: &DenseTensor) -> Result<f64> {
    if g.order() != 3 {
        return Err(Error::OrderMismatch { expected: 3, found: g.order() });
    }
    block_dual(&reduce(g.data(), g.shape()), g.shape())
}

/// Monte-Carlo `E pairwise_dual(G)` over standard Gaussian `G`; returns the
/// mean and its standard error.
pub fn pairwise_dual_width(shape: &[usize], draws: usize, seed: u64) -> Result<(f64, f64)> {
    if shape.len() != 3 || draws < 2 {
        return Err(Error::InvalidConfig("pairwise width needs an order-3 shape and at least 2 draws".into()));
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for batch in 0..draws.div_ceil(crate::spectral::WIDTH_BATCH) {
        let mut r = rng::substream(seed, batch as u64);
        let start = batch * crate::spectral::WIDTH_BATCH;
        for _ in start..draws.min(start + crate::spectral::WIDTH_BATCH) {
            let v = pairwise_dual(&rng::normal_tensor(&mut r, shape))?;
            sum += v;
            sum_sq += v * v;
        }
    }
    let n = draws as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok((mean, math::sqrt(var / n)))
}

/// Fit the centered components by accelerated proximal gradient; each prox
/// step double-centers a block and soft-thresholds its singular values.
pub fn pairwise_solve(problem: &RegressionProblem, lambda: f64, config: &SolverConfig) -> Result<PairwiseSolution> {
    if !(lambda > 0.0) {
        // the prox is what keeps the iterates centered
        return Err(Error::InvalidConfig("pairwise fits need lambda > 0".into()));
    }
    let features = pairwise_features(problem)?;
    let shape = problem.covariate_shape().to_vec();
    let dim = block_offsets(&shape)[3];
    let smooth = SmoothPart::new(&features, problem.response_data(), dim, 1, dim <= config.gram_limit);

    let eval = |w: &[f64]| -> Result<f64> {
        let mut total = 0.0;
        for b in blocks(w, &shape) {
            total += linalg::nuclear_norm(&b)?;
        }
        Ok(total)
    };
    let prox = |z: &[f64], t: f64| -> Result<Vec<f64>> {
        let bs = blocks(z, &shape);
        let mut out: [DMatrix<f64>; 3] = core::array::from_fn(|k| DMatrix::zeros(bs[k].nrows(), bs[k].ncols()));
        for k in 0..3 {
            out[k] = linalg::svt(&center(&bs[k]), t)?;
        }
        Ok(flatten(&out))
    };
    let kkt = |w: &[f64], g: &[f64]| -> Result<f64> {
        let r = eval(w)?;
        let bs = blocks(g, &shape);
        let centered: [DMatrix<f64>; 3] = core::array::from_fn(|k| center(&bs[k]));
        let cg = flatten(&centered);
        let dual = block_dual(g, &shape)?;
        let align: f64 = cg.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + lambda * r;
        Ok((dual - lambda).max(0.0) + align.abs() / (1.0 + r))
    };
    let out = run_fista(&smooth, &Penalty { eval: &eval, prox: &prox, kkt: &kkt }, lambda, config)?;
    let components = blocks(&out.w, &shape);
    let estimate = pairwise_tensor(&components)?;
    Ok(PairwiseSolution {
        result: SolveResult {
            estimate,
            objective_trace: out.trace,
            kkt_residual: out.kkt,
            iterations: out.iterations,
            lambda,
            status: out.status,
        },
        components,
    })
}
