//! Tensor spectral norm by the higher-order power method, and Monte-Carlo
//! Gaussian widths of regularizer unit balls.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::math;
use crate::regularizer::RegularizerSpec;
use crate::rng;
use crate::tensor::{self, DenseTensor};

/// Singular value soft-thresholding.
pub fn matrix_svt(z: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    linalg::svt(z, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HopmOptions {
    pub restarts: usize,
    pub iters: usize,
    /// Stop a run once the value improves by less than this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for HopmOptions {
    fn default() -> Self {
        Self { restarts: 20, iters: 200, tol: 1e-12, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HopmResult {
    pub value: f64,
    pub factors: [Vec<f64>; 3],
    /// Value after each sweep of the winning run.
    pub trace: Vec<f64>,
}

/// `A(·, v, w)` and its siblings: contract all modes but `mode`.
fn contract_except(a: &DenseTensor, mode: usize, f: &[Vec<f64>; 3]) -> Vec<f64> {
    let s = a.shape();
    let (d0, d1, d2) = (s[0], s[1], s[2]);
    let data = a.data();
    let mut out = alloc::vec![0.0; s[mode]];
    for i in 0..d0 {
        for j in 0..d1 {
            let row = &data[(i * d1 + j) * d2..(i * d1 + j + 1) * d2];
            match mode {
                0 => out[i] += f[1][j] * tensor::dot(row, &f[2]),
                1 => out[j] += f[0][i] * tensor::dot(row, &f[2]),
                _ => {
                    let c = f[0][i] * f[1][j];
                    for (o, v) in out.iter_mut().zip(row) {
                        *o += c * v;
                    }
                }
            }
        }
    }
    out
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = math::sqrt(tensor::dot(v, v));
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}

fn run_hopm(a: &DenseTensor, mut f: [Vec<f64>; 3], iters: usize, tol: f64) -> (f64, [Vec<f64>; 3], Vec<f64>) {
    let mut value = tensor::dot(&contract_except(a, 0, &f), &f[0]);
    let mut trace = Vec::new();
    for _ in 0..iters {
        let mut last = value;
        for mode in 0..3 {
            let mut g = contract_except(a, mode, &f);
            let n = normalize(&mut g);
            if n == 0.0 {
                // the current factors annihilate A; keep them
                continue;
            }
            f[mode] = g;
            last = n;
        }
        let improved = last - value;
        value = value.max(last);
        trace.push(value);
        if improved < tol {
            break;
        }
    }
    (value, f, trace)
}

/// Best `<A, u⊗v⊗w>` over unit factors found by alternating maximization,
/// a lower bound on `‖A‖_s`. The first run starts from the leading singular
/// vectors of the unfoldings, the rest from random unit vectors.
pub fn hopm_spectral(a: &DenseTensor, opts: &HopmOptions) -> Result<HopmResult> {
    if a.order() != 3 {
        return Err(Error::OrderMismatch { expected: 3, found: a.order() });
    }
    if a.is_zero() {
        return Err(Error::ZeroTensor);
    }
    if opts.restarts == 0 {
        return Err(Error::InvalidConfig("hopm needs at least one restart".into()));
    }
    let shape = a.shape().to_vec();
    let mut best: Option<HopmResult> = None;
    let mut r = rng::substream(opts.seed, 0);
    for run in 0..opts.restarts {
        let start: [Vec<f64>; 3] = if run == 0 {
            let mut f = [Vec::new(), Vec::new(), Vec::new()];
            for (k, fk) in f.iter_mut().enumerate() {
                let s = linalg::svd(&tensor::matricize(a, &[k])?)?;
                *fk = s.u.column(0).iter().copied().collect();
            }
            f
        } else {
            [
                rng::unit_vector(&mut r, shape[0]),
                rng::unit_vector(&mut r, shape[1]),
                rng::unit_vector(&mut r, shape[2]),
            ]
        };
        let (value, factors, trace) = run_hopm(a, start, opts.iters, opts.tol);
        if best.as_ref().map_or(true, |b| value > b.value) {
            best = Some(HopmResult { value, factors, trace });
        }
    }
    let mut best = best.ok_or(Error::ZeroTensor)?;
    // report the value of the returned factors exactly
    let exact = tensor::dot(&contract_except(a, 0, &best.factors), &best.factors[0]);
    if exact < 0.0 {
        for x in best.factors[0].iter_mut() {
            *x = -*x;
        }
    }
    best.value = exact.abs();
    Ok(best)
}

/// Rate of the width bound for each regularizer's unit ball, up to an
/// absolute constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthRate {
    /// `√log(d1 d2 d3)`
    SqrtLogD1D2D3,
    /// `√max{d_k, log(Π_{j≠k} d_j)}`
    SqrtMaxFiberLogRest,
    /// `√max{d_a d_b, log d_c}`
    SqrtMaxSliceAreaLogCount,
    /// `√max{d_a, d_b, log d_c}`
    SqrtMaxSliceSideLogCount,
    /// `√(d1 + d2 + d3)`
    SqrtSumDims,
    /// `√max{d1 d2, d2 d3, d1 d3}`
    SqrtMaxPairProduct,
}

impl WidthRate {
    pub fn for_spec(spec: &RegularizerSpec) -> Self {
        match spec {
            RegularizerSpec::EntryL1 => WidthRate::SqrtLogD1D2D3,
            RegularizerSpec::FiberGroup { .. } => WidthRate::SqrtMaxFiberLogRest,
            RegularizerSpec::SliceFrob { .. } => WidthRate::SqrtMaxSliceAreaLogCount,
            RegularizerSpec::SliceNuclear { .. } => WidthRate::SqrtMaxSliceSideLogCount,
            RegularizerSpec::TensorSpectralDualOnly => WidthRate::SqrtSumDims,
            RegularizerSpec::MatricizedNuclearSum => WidthRate::SqrtMaxPairProduct,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            WidthRate::SqrtLogD1D2D3 => "sqrt_log_d1d2d3",
            WidthRate::SqrtMaxFiberLogRest => "sqrt_max_dk_log_rest",
            WidthRate::SqrtMaxSliceAreaLogCount => "sqrt_max_dadb_log_dc",
            WidthRate::SqrtMaxSliceSideLogCount => "sqrt_max_da_db_log_dc",
            WidthRate::SqrtSumDims => "sqrt_d1_plus_d2_plus_d3",
            WidthRate::SqrtMaxPairProduct => "sqrt_max_pair_product",
        }
    }

    /// Evaluate the rate for `spec` at `shape`.
    pub fn value(spec: &RegularizerSpec, shape: &[usize]) -> f64 {
        let d: Vec<f64> = shape.iter().map(|&v| v as f64).collect();
        let v = match *spec {
            RegularizerSpec::EntryL1 => math::ln(d.iter().product()),
            RegularizerSpec::FiberGroup { mode } => {
                let rest: f64 = (0..3).filter(|&k| k != mode).map(|k| d[k]).product();
                d[mode].max(math::ln(rest))
            }
            RegularizerSpec::SliceFrob { axes } => (d[axes[0]] * d[axes[1]]).max(math::ln(d[3 - axes[0] - axes[1]])),
            RegularizerSpec::SliceNuclear { axes } => d[axes[0]].max(d[axes[1]]).max(math::ln(d[3 - axes[0] - axes[1]])),
            RegularizerSpec::TensorSpectralDualOnly => d.iter().sum(),
            RegularizerSpec::MatricizedNuclearSum => (d[0] * d[1]).max(d[1] * d[2]).max(d[0] * d[2]),
        };
        math::sqrt(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthEstimate {
    pub kind: RegularizerSpec,
    pub shape: Vec<usize>,
    pub seed: u64,
    pub mean: f64,
    pub std_error: f64,
    pub draws: usize,
    pub lemma_bound_form: WidthRate,
    /// The closed-form width rate evaluated at `shape`.
    pub rate_value: f64,
}

/// Draws per batch; batch `b` uses stream `b` of the seed.
pub const WIDTH_BATCH: usize = 64;

pub const MIN_WIDTH_DRAWS: usize = 100;

/// Sum and sum of squares of `R*(G)` over the draws of one batch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatchMoments {
    pub count: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

/// Number of batches needed for `draws` draws.
pub fn width_batches(draws: usize) -> usize {
    draws.div_ceil(WIDTH_BATCH)
}

/// Evaluate batch `batch` of a width estimate. Batches are independent, so
/// they may be computed in any order or in parallel.
pub fn width_batch(
    spec: &RegularizerSpec,
    shape: &[usize],
    draws: usize,
    seed: u64,
    batch: usize,
    hopm: &HopmOptions,
) -> Result<BatchMoments> {
    let start = batch * WIDTH_BATCH;
    let end = draws.min(start + WIDTH_BATCH);
    let mut r = rng::substream(seed, batch as u64);
    let mut m = BatchMoments::default();
    for draw in start..end {
        let g = rng::normal_tensor(&mut r, shape);
        let opts = HopmOptions { seed: rng::derive_seed(seed, &[draw as u64]), ..*hopm };
        let v = spec.dual(&g, &opts)?;
        m.count += 1;
        m.sum += v;
        m.sum_sq += v * v;
    }
    Ok(m)
}

/// Combine batch moments in batch order.
pub fn combine_width(
    spec: &RegularizerSpec,
    shape: &[usize],
    seed: u64,
    batches: &[BatchMoments],
) -> WidthEstimate {
    let mut total = BatchMoments::default();
    for b in batches {
        total.count += b.count;
        total.sum += b.sum;
        total.sum_sq += b.sum_sq;
    }
    let n = total.count as f64;
    let mean = total.sum / n;
    let var = if total.count > 1 { ((total.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    WidthEstimate {
        kind: *spec,
        shape: shape.to_vec(),
        seed,
        mean,
        std_error: math::sqrt(var / n),
        draws: total.count,
        lemma_bound_form: WidthRate::for_spec(spec),
        rate_value: WidthRate::value(spec, shape),
    }
}

fn check_width_inputs(spec: &RegularizerSpec, shape: &[usize], draws: usize) -> Result<()> {
    if shape.len() != 3 {
        return Err(Error::OrderMismatch { expected: 3, found: shape.len() });
    }
    if shape.contains(&0) {
        return Err(Error::ShapeMismatch { expected: alloc::vec![1, 1, 1], found: shape.to_vec() });
    }
    if draws < MIN_WIDTH_DRAWS {
        return Err(Error::InvalidConfig(alloc::format!("width needs at least {MIN_WIDTH_DRAWS} draws, got {draws}")));
    }
    spec.validate(shape)
}

/// `E R*(G)` for a standard Gaussian tensor `G`, by Monte Carlo.
pub fn gaussian_width_mc(
    spec: &RegularizerSpec,
    shape: &[usize],
    draws: usize,
    seed: u64,
    hopm: &HopmOptions,
) -> Result<WidthEstimate> {
    check_width_inputs(spec, shape, draws)?;
    let batches = (0..width_batches(draws))
        .map(|b| width_batch(spec, shape, draws, seed, b, hopm))
        .collect::<Result<Vec<_>>>()?;
    Ok(combine_width(spec, shape, seed, &batches))
}

/// Input validation shared with parallel callers of [`width_batch`].
pub fn validate_width_request(spec: &RegularizerSpec, shape: &[usize], draws: usize) -> Result<()> {
    check_width_inputs(spec, shape, draws)
}
