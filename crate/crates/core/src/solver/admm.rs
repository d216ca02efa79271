//! Consensus ADMM for the averaged sum of unfolding nuclear norms.

use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix};

use super::smooth::SmoothPart;
use super::{RegressionProblem, SolveResult, SolveStatus, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::math;
use crate::regularizer::{kkt_certificate, RegularizerSpec};
use crate::tensor::{self, DenseTensor};

const BALANCE_RATIO: f64 = 10.0;
const BALANCE_FACTOR: f64 = 2.0;

fn factor(s: &DMatrix<f64>, rho: f64) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let mut m = s.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += 3.0 * rho;
    }
    Cholesky::new(m).ok_or(Error::InvalidConfig("ADMM system is not positive definite".into()))
}

/// Minimize `(1/2n) Σ ‖Y_i − <A, X_i>‖² + (λ/3) Σ_k ‖M_k(A)‖_*` with three
/// unfolded copies `Z_k = A`. Returns the consensus iterate `A`.
pub fn admm_matricized(problem: &RegressionProblem, lambda: f64, config: &SolverConfig) -> Result<SolveResult> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidConfig(alloc::format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let shape = problem.coefficient_shape();
    if shape.len() != 3 {
        return Err(Error::OrderMismatch { expected: 3, found: shape.len() });
    }
    let dm = problem.covariate_dim();
    let dr = problem.response_dim();
    if dm > config.gram_limit {
        return Err(Error::InvalidConfig(alloc::format!(
            "covariate dimension {dm} exceeds the Gram limit {}",
            config.gram_limit
        )));
    }
    let spec = RegularizerSpec::MatricizedNuclearSum;
    let smooth = SmoothPart::from_problem(problem, usize::MAX);
    let (s, ct) = smooth.gram().expect("gram requested");
    let c = ct.transpose();
    let len = dm * dr;
    let wrap = |w: &[f64]| DenseTensor::from_parts(shape.clone(), w.to_vec());
    let objective = |w: &[f64]| -> Result<f64> {
        let pen = if lambda == 0.0 { 0.0 } else { lambda * spec.eval(&wrap(w))? };
        Ok(smooth.value(w) + pen)
    };

    let mut rho = config.rho;
    let mut chol = factor(s, rho)?;
    let mut a = alloc::vec![0.0; len];
    let mut z: Vec<Vec<f64>> = (0..3).map(|_| alloc::vec![0.0; len]).collect();
    let mut u: Vec<Vec<f64>> = (0..3).map(|_| alloc::vec![0.0; len]).collect();
    let initial = objective(&a)?;
    let mut trace = alloc::vec![initial];
    let mut status = SolveStatus::MaxIters;
    let mut iterations = 0;

    for k in 1..=config.max_iters {
        iterations = k;
        // A-update: (S + 3ρI) W = C + ρ Σ (Z_k − U_k)
        let mut rhs = c.clone();
        for i in 0..dm {
            for j in 0..dr {
                let off = i * dr + j;
                rhs[(i, j)] += rho * (0..3).map(|m| z[m][off] - u[m][off]).sum::<f64>();
            }
        }
        let w = chol.solve(&rhs);
        for i in 0..dm {
            for j in 0..dr {
                a[i * dr + j] = w[(i, j)];
            }
        }

        let mut primal = 0.0;
        let mut dual = 0.0;
        for m in 0..3 {
            let v: Vec<f64> = a.iter().zip(&u[m]).map(|(x, y)| x + y).collect();
            let mat = tensor::matricize(&wrap(&v), &[m])?;
            let shrunk = linalg::svt(&mat, lambda / (3.0 * rho))?;
            let new_z = tensor::dematricize(&shrunk, &shape, &[m])?.into_data();
            for off in 0..len {
                let d = new_z[off] - z[m][off];
                dual += d * d;
                let r = a[off] - new_z[off];
                primal += r * r;
                u[m][off] += r;
            }
            z[m] = new_z;
        }
        let primal = math::sqrt(primal);
        let dual = rho * math::sqrt(dual);

        let obj = objective(&a)?;
        trace.push(obj);
        if !obj.is_finite() || !primal.is_finite() || (initial > 0.0 && obj > 1e3 * initial) {
            status = SolveStatus::Diverged;
            break;
        }
        if primal < config.admm_tol && dual < config.admm_tol {
            status = SolveStatus::Converged;
            break;
        }
        let new_rho = if primal > BALANCE_RATIO * dual {
            rho * BALANCE_FACTOR
        } else if dual > BALANCE_RATIO * primal {
            rho / BALANCE_FACTOR
        } else {
            rho
        };
        if new_rho != rho {
            // scaled duals follow ρ
            let scale = rho / new_rho;
            for um in u.iter_mut() {
                um.iter_mut().for_each(|v| *v *= scale);
            }
            rho = new_rho;
            chol = factor(s, rho)?;
        }
    }

    let estimate = wrap(&a);
    let (_, g) = smooth.value_grad(&a);
    let kkt = kkt_certificate(&spec, &wrap(&g), &estimate, lambda, &config.hopm)?;
    Ok(SolveResult { estimate, objective_trace: trace, kkt_residual: kkt, iterations, lambda, status })
}
