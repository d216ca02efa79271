//! Stationary vector autoregressions `x_t = Σ_j A_j x_{t−j} + ε_t`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::rng;
use crate::solver::RegressionProblem;
use crate::tensor::DenseTensor;

/// Largest companion spectral radius accepted after rescaling.
const STABLE_TARGET: f64 = 0.95;
const MAX_GRID: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarModel {
    pub dim: usize,
    /// Lag matrices `A_1..A_p`, each `dim x dim` row-major.
    pub lags: Vec<Vec<f64>>,
    /// Samples discarded before the returned series starts; `None` uses
    /// `500 + 10 p`.
    #[serde(default)]
    pub burn_in: Option<usize>,
}

impl VarModel {
    pub fn new(dim: usize, lags: Vec<Vec<f64>>) -> Result<Self> {
        let m = Self { dim, lags, burn_in: None };
        m.validate()?;
        Ok(m)
    }

    pub fn order(&self) -> usize {
        self.lags.len()
    }

    pub fn lag(&self, j: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.lags[j])
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(500 + 10 * self.order())
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.lags.is_empty() {
            return Err(Error::InvalidConfig("VAR needs dim >= 1 and at least one lag".into()));
        }
        for l in &self.lags {
            if l.len() != self.dim * self.dim {
                return Err(Error::LengthMismatch { expected: self.dim * self.dim, found: l.len() });
            }
            if l.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        Ok(())
    }

    /// Companion matrix of the lag polynomial.
    pub fn companion(&self) -> DMatrix<f64> {
        let (m, p) = (self.dim, self.order());
        let mut c = DMatrix::zeros(m * p, m * p);
        for j in 0..p {
            c.view_mut((0, j * m), (m, m)).copy_from(&self.lag(j));
        }
        for i in m..m * p {
            c[(i, i - m)] = 1.0;
        }
        c
    }

    pub fn spectral_radius(&self) -> f64 {
        self.companion().complex_eigenvalues().iter().map(|z| math::hypot(z.re, z.im)).fold(0.0, f64::max)
    }

    /// `Ok` when the companion spectral radius is below one. With
    /// `auto_stabilize`, an unstable model has every lag `A_j` rescaled by
    /// `c^j` so the radius becomes 0.95.
    pub fn stabilized(mut self, auto_stabilize: bool) -> Result<Self> {
        self.validate()?;
        let rho = self.spectral_radius();
        if rho < 1.0 {
            return Ok(self);
        }
        if !auto_stabilize || !rho.is_finite() {
            return Err(Error::UnstableModel { spectral_radius: rho });
        }
        // eigenvalues of the companion scale by c when A_j -> c^j A_j
        let c = STABLE_TARGET / rho;
        let mut f = 1.0;
        for l in self.lags.iter_mut() {
            f *= c;
            l.iter_mut().for_each(|v| *v *= f);
        }
        Ok(self)
    }

    /// Coefficient tensor in regression layout `(m, p, m)`: entry
    /// `[l, j, k] = (A_{j+1})_{k l}`, matching covariate windows
    /// `W[l, j] = x_{t−1−j}[l]`.
    pub fn regression_tensor(&self) -> DenseTensor {
        let (m, p) = (self.dim, self.order());
        DenseTensor::from_fn(&[m, p, m], |ix| self.lags[ix[1]][ix[2] * m + ix[0]]).expect("positive extents")
    }

    /// Inverse of [`VarModel::regression_tensor`].
    pub fn from_regression_tensor(t: &DenseTensor) -> Result<Self> {
        let s = t.shape();
        if s.len() != 3 || s[0] != s[2] {
            return Err(Error::InvalidConfig(alloc::format!("VAR coefficient tensor must be (m, p, m), got {s:?}")));
        }
        let (m, p) = (s[0], s[1]);
        let lags = (0..p)
            .map(|j| {
                let mut a = alloc::vec![0.0; m * m];
                for k in 0..m {
                    for l in 0..m {
                        a[k * m + l] = t.get(&[l, j, k]);
                    }
                }
                a
            })
            .collect();
        Self::new(m, lags)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarSeries {
    /// Samples `t = p..n+p−1` of the retained series: covariates are lag
    /// windows `(m, p)`, responses `x_t`.
    pub problem: RegressionProblem,
    /// Retained series `x_0..x_{n+p−1}`, one row of `m` per time step.
    pub series: Vec<Vec<f64>>,
    /// `ε_t` for each response, same order as the samples.
    pub innovations: Vec<Vec<f64>>,
}

/// Simulate the model with standard normal innovations, discard the
/// burn-in, and return `n` regression samples.
pub fn gen_var_series(model: &VarModel, n: usize, seed: u64) -> Result<VarSeries> {
    model.validate()?;
    let rho = model.spectral_radius();
    if !(rho < 1.0) {
        return Err(Error::UnstableModel { spectral_radius: rho });
    }
    if n == 0 {
        return Err(Error::InvalidConfig("VAR series needs n >= 1".into()));
    }
    let (m, p) = (model.dim, model.order());
    let lags: Vec<DMatrix<f64>> = (0..p).map(|j| model.lag(j)).collect();
    let burn = model.burn_in();
    let total = burn + n + p;
    let mut r = rng::substream(seed, 0);
    let mut xs: Vec<DVector<f64>> = Vec::with_capacity(total);
    let mut eps: Vec<Vec<f64>> = Vec::with_capacity(total);
    for t in 0..total {
        let e = rng::normal_vec(&mut r, m);
        let mut x = DVector::from_column_slice(&e);
        for (j, a) in lags.iter().enumerate() {
            if t > j {
                x += a * &xs[t - 1 - j];
            }
        }
        xs.push(x);
        eps.push(e);
    }
    let series: Vec<Vec<f64>> = xs[burn..].iter().map(|v| v.as_slice().to_vec()).collect();
    let mut cov = Vec::with_capacity(n * m * p);
    let mut resp = Vec::with_capacity(n * m);
    let mut innovations = Vec::with_capacity(n);
    for t in p..n + p {
        for l in 0..m {
            for j in 0..p {
                cov.push(series[t - 1 - j][l]);
            }
        }
        resp.extend_from_slice(&series[t]);
        innovations.push(eps[burn + t].clone());
    }
    let problem = RegressionProblem::new(alloc::vec![m, p], alloc::vec![m], cov, resp, 1.0, Some(model.regression_tensor()))?;
    Ok(VarSeries { problem, series, innovations })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralExtrema {
    /// `min_θ λ_min(𝒜*(e^{iθ}) 𝒜(e^{iθ}))`.
    pub mu_min: f64,
    /// `max_θ λ_max(𝒜*(e^{iθ}) 𝒜(e^{iθ}))`.
    pub mu_max: f64,
    pub grid: usize,
}

fn extrema_on_grid(lags: &[DMatrix<f64>], m: usize, grid: usize) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for g in 0..grid {
        let theta = 2.0 * core::f64::consts::PI * g as f64 / grid as f64;
        // 𝒜(e^{−iθ}) = I − Σ A_j e^{−ijθ} = Re + i Im
        let mut re = DMatrix::identity(m, m);
        let mut im = DMatrix::zeros(m, m);
        for (j, a) in lags.iter().enumerate() {
            let w = (j + 1) as f64 * theta;
            re -= a * math::cos(w);
            im += a * math::sin(w);
        }
        // real 2m x 2m embedding of 𝒜; its Gram matrix carries each
        // eigenvalue of 𝒜*𝒜 twice
        let mut e = DMatrix::zeros(2 * m, 2 * m);
        e.view_mut((0, 0), (m, m)).copy_from(&re);
        e.view_mut((m, m), (m, m)).copy_from(&re);
        e.view_mut((0, m), (m, m)).copy_from(&(-&im));
        e.view_mut((m, 0), (m, m)).copy_from(&im);
        let h = e.transpose() * &e;
        let ev = h.symmetric_eigenvalues();
        if ev.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        lo = lo.min(ev.min());
        hi = hi.max(ev.max());
    }
    Ok((lo.max(0.0), hi))
}

/// Extremes of the eigenvalues of `𝒜*𝒜` over the unit circle, evaluated on
/// a uniform grid of at least `grid` angles. The grid doubles until both
/// extremes move by less than `1e-6` relative to their size.
pub fn var_spectral_extrema(model: &VarModel, grid: usize) -> Result<SpectralExtrema> {
    model.validate()?;
    if grid < 64 {
        return Err(Error::InvalidConfig(alloc::format!("spectral grid needs at least 64 points, got {grid}")));
    }
    let lags: Vec<DMatrix<f64>> = (0..model.order()).map(|j| model.lag(j)).collect();
    let mut g = grid;
    let (mut lo, mut hi) = extrema_on_grid(&lags, model.dim, g)?;
    while g < MAX_GRID {
        let (lo2, hi2) = extrema_on_grid(&lags, model.dim, 2 * g)?;
        g *= 2;
        let settled = (lo2 - lo).abs() <= 1e-6 * lo2.max(1e-12) && (hi2 - hi).abs() <= 1e-6 * hi2;
        lo = lo2;
        hi = hi2;
        if settled {
            break;
        }
    }
    Ok(SpectralExtrema { mu_min: lo, mu_max: hi, grid: g })
}
