//! Accelerated proximal gradient with backtracking and monotone restart.

use alloc::vec::Vec;

use super::smooth::SmoothPart;
use super::{RegressionProblem, SolveResult, SolveStatus, SolverConfig};
use crate::error::{Error, Result};
use crate::math;
use crate::regularizer::{kkt_certificate, RegularizerSpec};
use crate::tensor::{self, DenseTensor};

pub(crate) struct Penalty<'p> {
    pub eval: &'p dyn Fn(&[f64]) -> Result<f64>,
    /// `prox(z, t) = argmin ½‖x − z‖² + t·R(x)`
    pub prox: &'p dyn Fn(&[f64], f64) -> Result<Vec<f64>>,
    /// Certificate from `(w, ∇f(w))`.
    pub kkt: &'p dyn Fn(&[f64], &[f64]) -> Result<f64>,
}

pub(crate) struct FistaOutput {
    pub w: Vec<f64>,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub status: SolveStatus,
    pub kkt: f64,
}

const POWER_ITERS: usize = 5;
const KKT_EVERY: usize = 10;
/// Relative objective increase attributed to rounding.
const ROUNDOFF: f64 = 1e-12;
/// Relative objective decrease too small to be told from rounding.
const NOISE: f64 = 16.0 * f64::EPSILON;

pub(crate) fn run_fista(
    smooth: &SmoothPart<'_>,
    penalty: &Penalty<'_>,
    lambda: f64,
    config: &SolverConfig,
) -> Result<FistaOutput> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidConfig(alloc::format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let dim = smooth.len();
    let prox = |z: &[f64], t: f64| -> Result<Vec<f64>> {
        if lambda == 0.0 {
            Ok(z.to_vec())
        } else {
            (penalty.prox)(z, t)
        }
    };
    let penalty_value = |w: &[f64]| -> Result<f64> {
        if lambda == 0.0 {
            Ok(0.0)
        } else {
            Ok(lambda * (penalty.eval)(w)?)
        }
    };

    let mut x = alloc::vec![0.0; dim];
    let mut fx = smooth.value(&x) + penalty_value(&x)?;
    let initial = fx;
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut lip = smooth.lipschitz_estimate(POWER_ITERS);
    let mut trace = alloc::vec![fx];
    let mut status = SolveStatus::MaxIters;
    let mut iterations = 0;

    for k in 1..=config.max_iters {
        iterations = k;
        let (_, gy) = smooth.value_grad(&y);
        let mut z;
        let fz;
        loop {
            let step: Vec<f64> = y.iter().zip(&gy).map(|(a, g)| a - g / lip).collect();
            z = prox(&step, lambda / lip)?;
            // f is quadratic: f(z) ≤ f(y) + <∇f(y), d> + L/2 ‖d‖² iff the
            // curvature along d is at most L/2 ‖d‖²
            let d: Vec<f64> = z.iter().zip(&y).map(|(a, b)| a - b).collect();
            let curv = smooth.curvature(&d);
            if !curv.is_finite() || curv <= 0.5 * lip * tensor::dot(&d, &d) * (1.0 + 1e-12) || lip > 1e300 {
                fz = smooth.value(&z);
                break;
            }
            lip *= 2.0;
        }
        let big_fz = fz + penalty_value(&z)?;
        if !big_fz.is_finite() || (initial > 0.0 && big_fz > 1e3 * initial) {
            status = SolveStatus::Diverged;
            break;
        }
        // Below a few ulps of F the objective cannot rank iterates; momentum
        // would wander in that flat band, so fall back to plain steps.
        if big_fz > fx - NOISE * fx.abs() {
            if y != x {
                // restart from the last accepted point without momentum
                t = 1.0;
                y = x.clone();
                continue;
            }
            // A prox-gradient step from x cannot increase the objective, so
            // an increase here is rounding. Keep stepping on the certificate.
            // `fx` stays put so the trace only records measurable decreases.
            if z == x || big_fz - fx > ROUNDOFF * fx.abs().max(1.0) {
                status = SolveStatus::Converged;
                break;
            }
            x = z;
            y = x.clone();
            let (_, gx) = smooth.value_grad(&x);
            if (penalty.kkt)(&x, &gx)? < config.kkt_tol {
                status = SolveStatus::Converged;
                break;
            }
            continue;
        }
        let t_next = (1.0 + math::sqrt(1.0 + 4.0 * t * t)) / 2.0;
        let beta = (t - 1.0) / t_next;
        y = z.iter().zip(&x).map(|(zi, xi)| zi + beta * (zi - xi)).collect();
        let change = fx - big_fz;
        x = z;
        fx = big_fz;
        t = t_next;
        trace.push(fx);

        let rel = change / fx.abs().max(f64::MIN_POSITIVE);
        if rel < config.tol || k % KKT_EVERY == 0 {
            let (_, gx) = smooth.value_grad(&x);
            let kkt = (penalty.kkt)(&x, &gx)?;
            if kkt < config.kkt_tol || rel < config.tol {
                status = SolveStatus::Converged;
                break;
            }
        }
    }
    let (_, gx) = smooth.value_grad(&x);
    let kkt = (penalty.kkt)(&x, &gx)?;
    Ok(FistaOutput { w: x, trace, iterations, status, kkt })
}

/// Solve the penalized program for a regularizer with a closed-form prox.
pub fn fista_solve(
    problem: &RegressionProblem,
    spec: &RegularizerSpec,
    lambda: f64,
    config: &SolverConfig,
) -> Result<SolveResult> {
    if !spec.has_closed_form_prox() {
        return Err(Error::NoClosedFormProx(spec.name()));
    }
    let shape = problem.coefficient_shape();
    spec.validate(&shape)?;
    let wrap = |w: &[f64]| DenseTensor::from_parts(shape.clone(), w.to_vec());
    let eval = |w: &[f64]| spec.eval(&wrap(w));
    let prox = |z: &[f64], t: f64| spec.prox(&wrap(z), t).map(DenseTensor::into_data);
    let kkt = |w: &[f64], g: &[f64]| kkt_certificate(spec, &wrap(g), &wrap(w), lambda, &config.hopm);
    let smooth = SmoothPart::from_problem(problem, config.gram_limit);
    let out = run_fista(&smooth, &Penalty { eval: &eval, prox: &prox, kkt: &kkt }, lambda, config)?;
    Ok(SolveResult {
        estimate: wrap(&out.w),
        objective_trace: out.trace,
        kkt_residual: out.kkt,
        iterations: out.iterations,
        lambda,
        status: out.status,
    })
}
