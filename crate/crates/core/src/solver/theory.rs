//! Tuning rule for `λ` and the predicted risk bound.

use crate::error::{Error, Result};
use crate::math;
use crate::regularizer::{analytic_compatibility, RegularizerSpec, SubspaceSpec};

/// `λ = multiplier · 2 c_u (3 + c_R) / (c_R √n) · width`.
pub fn lambda_rule(width: f64, n: usize, c_u: f64, c_r: f64, multiplier: f64) -> Result<f64> {
    if n == 0 || !(c_u > 0.0) || !(c_r > 0.0 && c_r <= 1.0) || !(multiplier >= 1.0) || !(width >= 0.0) {
        return Err(Error::InvalidConfig(alloc::format!(
            "lambda rule needs n >= 1, c_u > 0, 0 < c_R <= 1, multiplier >= 1, width >= 0 \
             (n={n}, c_u={c_u}, c_R={c_r}, multiplier={multiplier}, width={width})"
        )));
    }
    Ok(multiplier * 2.0 * c_u * (3.0 + c_r) / (c_r * math::sqrt(n as f64)) * width)
}

/// `6 (1 + c_R) / (3 + c_R)`.
pub fn risk_prefactor(c_r: f64) -> f64 {
    6.0 * (1.0 + c_r) / (3.0 + c_r)
}

/// `6(1 + c_R)/(3 + c_R) · 9 c_u²/c_ℓ² · s · λ²` with `s` the closed-form
/// compatibility bound of the matched pair.
pub fn risk_bound_predicted(
    spec: &RegularizerSpec,
    sub: &SubspaceSpec,
    lambda: f64,
    c_u: f64,
    c_ell: f64,
) -> Result<f64> {
    if !(c_ell > 0.0) || c_u < c_ell {
        return Err(Error::InvalidConfig(alloc::format!("need c_u >= c_ell > 0 (c_u={c_u}, c_ell={c_ell})")));
    }
    sub.validate()?;
    let s = analytic_compatibility(spec, sub)?;
    Ok(risk_prefactor(spec.c_r()) * 9.0 * c_u * c_u / (c_ell * c_ell) * s * lambda * lambda)
}
