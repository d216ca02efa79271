//! Penalized least squares `min_A (1/2n) Σ ‖Y_i − <A, X_i>‖² + λ R(A)`.
//!
//! The coefficient tensor has shape `covariate shape ++ response shape`;
//! `<A, X_i>` contracts the leading (covariate) axes of `A` against `X_i`.

mod admm;
mod fista;
mod pairwise;
mod smooth;
mod theory;

pub use admm::admm_matricized;
pub use fista::fista_solve;
pub use pairwise::{
    pairwise_components, pairwise_dual, pairwise_dual_width, pairwise_features, pairwise_solve, pairwise_tensor, PairwiseSolution,
};
pub use smooth::SmoothPart;
pub use theory::{lambda_rule, risk_bound_predicted, risk_prefactor};

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::regularizer::{kkt_certificate, RegularizerSpec};
use crate::spectral::HopmOptions;
use crate::tensor::{self, DenseTensor};

/// Samples `(X_i, Y_i)` stored as stacked flat buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    covariate_shape: Vec<usize>,
    response_shape: Vec<usize>,
    covariates: Vec<f64>,
    responses: Vec<f64>,
    n: usize,
    pub noise_sigma: f64,
    pub truth: Option<DenseTensor>,
}

impl RegressionProblem {
    /// `covariates` holds `n` covariate tensors back to back in layout
    /// order, `responses` the `n` responses. An empty `response_shape`
    /// means scalar responses.
    pub fn new(
        covariate_shape: Vec<usize>,
        response_shape: Vec<usize>,
        covariates: Vec<f64>,
        responses: Vec<f64>,
        noise_sigma: f64,
        truth: Option<DenseTensor>,
    ) -> Result<Self> {
        if covariate_shape.is_empty() || covariate_shape.contains(&0) || response_shape.contains(&0) {
            return Err(Error::InvalidConfig("covariate and response extents must be positive".into()));
        }
        let dm = tensor::num_elements(&covariate_shape);
        let dr = tensor::num_elements(&response_shape);
        if covariates.is_empty() || covariates.len() % dm != 0 {
            return Err(Error::LengthMismatch { expected: dm, found: covariates.len() });
        }
        let n = covariates.len() / dm;
        if responses.len() != n * dr {
            return Err(Error::LengthMismatch { expected: n * dr, found: responses.len() });
        }
        if covariates.iter().chain(&responses).any(|v| !v.is_finite()) || !noise_sigma.is_finite() {
            return Err(Error::NonFinite);
        }
        if let Some(t) = &truth {
            let mut want = covariate_shape.clone();
            want.extend_from_slice(&response_shape);
            if t.shape() != want.as_slice() {
                return Err(Error::ShapeMismatch { expected: want, found: t.shape().to_vec() });
            }
        }
        Ok(Self { covariate_shape, response_shape, covariates, responses, n, noise_sigma, truth })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of covariate axes `M`.
    pub fn split(&self) -> usize {
        self.covariate_shape.len()
    }

    pub fn covariate_shape(&self) -> &[usize] {
        &self.covariate_shape
    }

    pub fn response_shape(&self) -> &[usize] {
        &self.response_shape
    }

    pub fn coefficient_shape(&self) -> Vec<usize> {
        let mut s = self.covariate_shape.clone();
        s.extend_from_slice(&self.response_shape);
        s
    }

    pub(crate) fn covariate_dim(&self) -> usize {
        tensor::num_elements(&self.covariate_shape)
    }

    pub(crate) fn response_dim(&self) -> usize {
        tensor::num_elements(&self.response_shape)
    }

    pub fn covariate_data(&self) -> &[f64] {
        &self.covariates
    }

    pub fn response_data(&self) -> &[f64] {
        &self.responses
    }

    pub fn covariate_row(&self, i: usize) -> &[f64] {
        let dm = self.covariate_dim();
        &self.covariates[i * dm..(i + 1) * dm]
    }

    pub fn response_row(&self, i: usize) -> &[f64] {
        let dr = self.response_dim();
        &self.responses[i * dr..(i + 1) * dr]
    }

    pub fn covariate(&self, i: usize) -> DenseTensor {
        DenseTensor::from_parts(self.covariate_shape.clone(), self.covariate_row(i).to_vec())
    }

    fn check_coefficient(&self, a: &DenseTensor) -> Result<()> {
        let want = self.coefficient_shape();
        if a.shape() != want.as_slice() {
            return Err(Error::ShapeMismatch { expected: want, found: a.shape().to_vec() });
        }
        Ok(())
    }

    /// `<A, X_i>` as a flat response-shaped vector.
    pub fn predict(&self, a: &DenseTensor, i: usize) -> Vec<f64> {
        tensor::contract_prefix(self.covariate_row(i), a.data(), self.response_dim())
    }

    /// `(1/2n) Σ ‖Y_i − <A, X_i>‖²` evaluated sample by sample.
    pub fn loss(&self, a: &DenseTensor) -> Result<f64> {
        self.check_coefficient(a)?;
        let mut total = 0.0;
        for i in 0..self.n {
            let pred = self.predict(a, i);
            total += pred.iter().zip(self.response_row(i)).map(|(p, y)| (y - p) * (y - p)).sum::<f64>();
        }
        Ok(total / (2.0 * self.n as f64))
    }

    /// `(1/n) Σ X_i ⊗ (<A, X_i> − Y_i)`, evaluated sample by sample.
    pub fn loss_gradient(&self, a: &DenseTensor) -> Result<DenseTensor> {
        self.check_coefficient(a)?;
        let dr = self.response_dim();
        let mut g = alloc::vec![0.0; a.len()];
        for i in 0..self.n {
            let pred = self.predict(a, i);
            let resid: Vec<f64> = pred.iter().zip(self.response_row(i)).map(|(p, y)| p - y).collect();
            for (j, &x) in self.covariate_row(i).iter().enumerate() {
                if x != 0.0 {
                    for (gk, r) in g[j * dr..(j + 1) * dr].iter_mut().zip(&resid) {
                        *gk += x * r;
                    }
                }
            }
        }
        let inv = 1.0 / self.n as f64;
        Ok(DenseTensor::from_parts(a.shape().to_vec(), g.into_iter().map(|v| v * inv).collect()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIters,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub estimate: DenseTensor,
    pub objective_trace: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub lambda: f64,
    pub status: SolveStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Relative objective change stopping threshold.
    pub tol: f64,
    pub kkt_tol: f64,
    /// ADMM primal and dual residual threshold.
    pub admm_tol: f64,
    pub rho: f64,
    /// Use a precomputed Gram matrix when the covariate dimension is at most
    /// this.
    pub gram_limit: usize,
    pub hopm: HopmOptions,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            tol: 1e-10,
            kkt_tol: 1e-7,
            admm_tol: 1e-6,
            rho: 1.0,
            gram_limit: 2048,
            hopm: HopmOptions::default(),
        }
    }
}

/// `(1/2n) Σ ‖Y_i − <A, X_i>‖² + λ R(A)`.
pub fn objective(problem: &RegressionProblem, spec: &RegularizerSpec, lambda: f64, a: &DenseTensor) -> Result<f64> {
    let loss = problem.loss(a)?;
    if lambda == 0.0 {
        return Ok(loss);
    }
    Ok(loss + lambda * spec.eval(a)?)
}

/// `‖Δ‖_n = ((1/n) Σ ‖<Δ, X_i>‖²)^{1/2}`.
pub fn empirical_norm(problem: &RegressionProblem, delta: &DenseTensor) -> Result<f64> {
    problem.check_coefficient(delta)?;
    let mut total = 0.0;
    for i in 0..problem.n() {
        total += problem.predict(delta, i).iter().map(|v| v * v).sum::<f64>();
    }
    Ok(math::sqrt(total / problem.n() as f64))
}

/// Solve with the method that fits `spec`: proximal gradient for the
/// closed-form proxes, ADMM for the matricized nuclear sum.
pub fn solve(problem: &RegressionProblem, spec: &RegularizerSpec, lambda: f64, config: &SolverConfig) -> Result<SolveResult> {
    match spec {
        RegularizerSpec::MatricizedNuclearSum => admm_matricized(problem, lambda, config),
        _ => fista_solve(problem, spec, lambda, config),
    }
}

/// First-order optimality certificate of `A` for the penalized program.
pub fn kkt_residual(problem: &RegressionProblem, spec: &RegularizerSpec, lambda: f64, a: &DenseTensor) -> Result<f64> {
    let grad = problem.loss_gradient(a)?;
    kkt_certificate(spec, &grad, a, lambda, &HopmOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn tiny() -> RegressionProblem {
        // two samples, covariates 1x2, scalar responses
        RegressionProblem::new(vec![1, 2], vec![], vec![1.0, 0.0, 0.0, 2.0], vec![1.0, 4.0], 0.0, None).unwrap()
    }

    #[test]
    fn objective_at_zero() {
        let p = tiny();
        let z = DenseTensor::zeros(&[1, 2]);
        assert!((objective(&p, &RegularizerSpec::EntryL1, 1.0, &z).unwrap() - 17.0 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn exact_fit_has_zero_loss() {
        let p = tiny();
        let a = DenseTensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        assert_eq!(objective(&p, &RegularizerSpec::EntryL1, 0.0, &a).unwrap(), 0.0);
        assert!(p.loss_gradient(&a).unwrap().is_zero());
    }

    #[test]
    fn shape_checks() {
        let p = tiny();
        assert!(matches!(p.loss(&DenseTensor::zeros(&[2, 1])), Err(Error::ShapeMismatch { .. })));
        assert!(RegressionProblem::new(vec![2], vec![], vec![1.0, 2.0, 3.0], vec![1.0], 0.0, None).is_err());
    }
}
