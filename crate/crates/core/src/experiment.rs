//! Rate sweeps and width tables.
//!
//! A rate experiment is split into a [`RatePlan`] (truth, width, `λ` per
//! grid point) and independent cells `(n, replication)`. Each cell derives
//! its own seed, so cells may run in any order.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::datagen::{self, Design, ModelClass, ModelClassSpec, VarModel};
use crate::error::{Error, Result};
use crate::math;
use crate::regularizer::{analytic_compatibility, RegularizerSpec, SubspaceSpec};
use crate::rng;
use crate::solver::{self, empirical_norm, lambda_rule, pairwise_dual_width, pairwise_solve, RegressionProblem};
use crate::solver::{risk_bound_predicted, SolveStatus, SolverConfig};
use crate::spectral::{gaussian_width_mc, HopmOptions, WidthRate};
use crate::tensor::DenseTensor;

/// Predicted error rates, each to be divided by `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateForm {
    /// `s log(d1 d2 d3)`
    SLogD1D2D3,
    /// `s max{d_k, log(Π_{j≠k} d_j)}`
    SMaxFiberLogRest,
    /// `s max{d_a d_b, log d_c}`
    SMaxSliceAreaLogCount,
    /// `r max{d_a, d_b, log d_c}`
    RMaxSliceSideLogCount,
    /// `r max{d1 d2, d2 d3, d1 d3}`
    RMaxPairProduct,
    /// `s max{m², log p}`
    SMaxM2LogP,
    /// `r max{m, log(p / r)}`
    RMaxMLogPOverR,
    /// `s max{p, 2 log m}`
    SMaxP2LogM,
    /// `r max{d1, d2, d3}`
    RMaxDk,
}

impl RateForm {
    /// The rate for a class on its own shape, before dividing by `n`.
    pub fn numerator(self, class: &ModelClassSpec) -> Result<f64> {
        let d: Vec<f64> = class.shape.iter().map(|&v| v as f64).collect();
        if d.len() != 3 {
            return Err(Error::InvalidConfig("rates are defined for order-3 shapes".into()));
        }
        let (k, mode, axes) = match class.class {
            ModelClass::Theta1 { s } | ModelClass::T1 { s } | ModelClass::T3 { s } => (s, 1, [1, 2]),
            ModelClass::Theta2 { s, mode } => (s, mode, [1, 2]),
            ModelClass::Theta3 { s, axes } => (s, 1, axes),
            ModelClass::Theta4 { r, axes } => (r, 1, axes),
            ModelClass::T2 { r } | ModelClass::Theta5 { r } | ModelClass::T4 { r } => (r, 1, [1, 2]),
        };
        let k = k as f64;
        let c = 3 - axes[0] - axes[1];
        let v = match self {
            RateForm::SLogD1D2D3 => math::ln(d[0] * d[1] * d[2]),
            RateForm::SMaxFiberLogRest => {
                let rest: f64 = (0..3).filter(|&j| j != mode).map(|j| d[j]).product();
                d[mode].max(math::ln(rest))
            }
            RateForm::SMaxSliceAreaLogCount => (d[axes[0]] * d[axes[1]]).max(math::ln(d[c])),
            RateForm::RMaxSliceSideLogCount => d[axes[0]].max(d[axes[1]]).max(math::ln(d[c])),
            RateForm::RMaxPairProduct => (d[0] * d[1]).max(d[1] * d[2]).max(d[0] * d[2]),
            // multi-response shapes are (p, m, m)
            RateForm::SMaxM2LogP => (d[1] * d[1]).max(math::ln(d[0])),
            RateForm::RMaxMLogPOverR => d[1].max(math::ln(d[0] / k.max(1.0))),
            // autoregressive shapes are (m, p, m)
            RateForm::SMaxP2LogM => d[1].max(2.0 * math::ln(d[0])),
            RateForm::RMaxDk => d[0].max(d[1]).max(d[2]),
        };
        Ok(k * v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "snake_case")]
pub enum Estimator {
    /// Penalized least squares with a norm from the catalogue.
    Norm { regularizer: RegularizerSpec },
    /// Centered pairwise components with a nuclear penalty on each.
    PairwiseNuclear,
}

fn default_sigma() -> f64 {
    1.0
}

fn default_multiplier() -> f64 {
    1.0
}

fn default_width_draws() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateExperimentConfig {
    pub class: ModelClassSpec,
    pub estimator: Estimator,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    #[serde(default = "default_multiplier")]
    pub lambda_multiplier: f64,
    pub rate: RateForm,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    #[serde(default = "default_width_draws")]
    pub width_draws: usize,
    /// Rescale an unstable autoregressive truth instead of rejecting it.
    #[serde(default)]
    pub auto_stabilize: bool,
    #[serde(default)]
    pub solver: SolverConfig,
}

pub const MIN_GRID_POINTS: usize = 4;
pub const MIN_REPLICATIONS: usize = 10;

impl RateExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_grid.len() < MIN_GRID_POINTS {
            return bad(alloc::format!("n grid needs at least {MIN_GRID_POINTS} points"));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) || self.n_grid[0] == 0 {
            return bad("n grid must be positive and strictly increasing".into());
        }
        if self.replications < MIN_REPLICATIONS {
            return bad(alloc::format!("need at least {MIN_REPLICATIONS} replications"));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad("noise sigma must be finite and >= 0".into());
        }
        let pairwise = matches!(self.class.class, ModelClass::T4 { .. });
        match &self.estimator {
            Estimator::PairwiseNuclear if !pairwise => bad("the pairwise estimator needs a T4 class".into()),
            Estimator::Norm { .. } if pairwise => bad("T4 classes need the pairwise estimator".into()),
            Estimator::Norm { regularizer } => {
                if !regularizer.has_primal() {
                    return bad(alloc::format!("{} cannot be used as a penalty", regularizer.name()));
                }
                regularizer.validate(&self.class.shape)
            }
            Estimator::PairwiseNuclear => Ok(()),
        }
    }

    fn is_var(&self) -> bool {
        matches!(self.class.class, ModelClass::T3 { .. })
    }

    /// Number of covariate axes.
    fn split(&self) -> usize {
        match self.class.class {
            ModelClass::T1 { .. } | ModelClass::T2 { .. } | ModelClass::T3 { .. } => 2,
            _ => 3,
        }
    }
}

/// Everything shared by the cells of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePlan {
    pub config: RateExperimentConfig,
    pub truth: DenseTensor,
    pub var_model: Option<VarModel>,
    pub width: f64,
    pub width_std_error: f64,
    pub c_u: f64,
    pub c_ell: f64,
    pub c_r: f64,
    /// `λ` for each grid point, in grid order.
    pub lambdas: Vec<f64>,
    /// Predicted rate for each grid point.
    pub rates: Vec<f64>,
    /// Closed-form risk bound for each grid point, when the pair has one.
    pub risk_bounds: Vec<Option<f64>>,
}

const SPECTRAL_GRID: usize = 256;

pub fn plan_rate_experiment(config: &RateExperimentConfig) -> Result<RatePlan> {
    config.validate()?;
    let mut truth = datagen::gen_truth(&config.class, rng::derive_seed(config.seed, &[0]))?;
    let mut var_model = None;
    let (c_u, c_ell) = if config.is_var() {
        let model = VarModel::from_regression_tensor(&truth)?.stabilized(config.auto_stabilize)?;
        truth = model.regression_tensor();
        let ext = datagen::var_spectral_extrema(&model, SPECTRAL_GRID)?;
        var_model = Some(model);
        (1.0 / math::sqrt(ext.mu_min), 1.0 / math::sqrt(ext.mu_max))
    } else {
        (1.0, 1.0)
    };
    let width_seed = rng::derive_seed(config.seed, &[1]);
    let (width, width_se, c_r, sub) = match &config.estimator {
        Estimator::Norm { regularizer } => {
            let w = gaussian_width_mc(regularizer, &config.class.shape, config.width_draws, width_seed, &HopmOptions::default())?;
            let sub = SubspaceSpec::matched(regularizer, &truth).ok();
            (w.mean, w.std_error, regularizer.c_r(), sub)
        }
        Estimator::PairwiseNuclear => {
            let (m, se) = pairwise_dual_width(&config.class.shape, config.width_draws, width_seed)?;
            (m, se, 1.0, None)
        }
    };
    let mut lambdas = Vec::with_capacity(config.n_grid.len());
    let mut rates = Vec::with_capacity(config.n_grid.len());
    let mut risk_bounds = Vec::with_capacity(config.n_grid.len());
    let numerator = config.rate.numerator(&config.class)?;
    for &n in &config.n_grid {
        let lambda = lambda_rule(width, n, c_u, c_r, config.lambda_multiplier)?;
        lambdas.push(lambda);
        rates.push(numerator / n as f64);
        let bound = match (&config.estimator, &sub) {
            (Estimator::Norm { regularizer }, Some(sub)) => {
                match analytic_compatibility(regularizer, sub) {
                    Ok(_) => Some(risk_bound_predicted(regularizer, sub, lambda, c_u, c_ell)?),
                    Err(Error::UnmatchedPair) => None,
                    Err(e) => return Err(e),
                }
            }
            _ => None,
        };
        risk_bounds.push(bound);
    }
    Ok(RatePlan {
        config: config.clone(),
        truth,
        var_model,
        width,
        width_std_error: width_se,
        c_u,
        c_ell,
        c_r,
        lambdas,
        rates,
        risk_bounds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCell {
    pub n: usize,
    pub replication: usize,
    pub lambda: f64,
    /// `‖T̂ − T‖_F²`
    pub error_frobenius_sq: f64,
    /// `‖T̂ − T‖_n²`
    pub error_empirical_sq: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// Whether `max` of the two errors is within the closed-form bound.
    pub within_bound: Option<bool>,
}

/// Problem for one cell; the seed depends only on `(n, replication)`.
pub fn cell_problem(plan: &RatePlan, n: usize, replication: usize) -> Result<RegressionProblem> {
    let seed = rng::derive_seed(plan.config.seed, &[2, n as u64, replication as u64]);
    match &plan.var_model {
        Some(model) => Ok(datagen::gen_var_series(model, n, seed)?.problem),
        None => datagen::gen_problem(&plan.truth, n, plan.config.split(), plan.config.noise_sigma, &Design::Iid, seed),
    }
}

pub fn run_rate_cell(plan: &RatePlan, n: usize, replication: usize) -> Result<RateCell> {
    let g = plan
        .config
        .n_grid
        .iter()
        .position(|&v| v == n)
        .ok_or_else(|| Error::InvalidConfig(alloc::format!("n = {n} is not on the grid")))?;
    let lambda = plan.lambdas[g];
    let problem = cell_problem(plan, n, replication)?;
    let result = match &plan.config.estimator {
        Estimator::Norm { regularizer } => solver::solve(&problem, regularizer, lambda, &plan.config.solver)?,
        Estimator::PairwiseNuclear => pairwise_solve(&problem, lambda, &plan.config.solver)?.result,
    };
    let delta = result.estimate.sub(&plan.truth)?;
    let ef = delta.frobenius_sq();
    let en = empirical_norm(&problem, &delta)?;
    let en = en * en;
    Ok(RateCell {
        n,
        replication,
        lambda,
        error_frobenius_sq: ef,
        error_empirical_sq: en,
        status: result.status,
        iterations: result.iterations,
        kkt_residual: result.kkt_residual,
        within_bound: plan.risk_bounds[g].map(|b| ef.max(en) <= b),
    })
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(x_i, y_i)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidConfig("line fit needs at least two paired points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidConfig("line fit needs distinct x values".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LineFit { slope, intercept: my - slope * mx, r_squared })
}

/// `fit_line` on `(ln x, ln y)`.
pub fn fit_log_log(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidConfig("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| math::ln(*v)).collect();
    let ly: Vec<f64> = y.iter().map(|v| math::ln(*v)).collect();
    fit_line(&lx, &ly)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q10: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q90: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self {
            q10: quantile(&v, 0.1),
            q25: quantile(&v, 0.25),
            q50: quantile(&v, 0.5),
            q75: quantile(&v, 0.75),
            q90: quantile(&v, 0.9),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub n: usize,
    pub lambda: f64,
    pub predicted_rate: f64,
    pub risk_bound: Option<f64>,
    pub frobenius_sq: Quantiles,
    pub empirical_sq: Quantiles,
    pub max_iters: usize,
    pub diverged: usize,
    /// Fraction of replications within the closed-form bound.
    pub bound_coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub config: RateExperimentConfig,
    pub width: f64,
    pub width_std_error: f64,
    pub c_u: f64,
    pub c_ell: f64,
    pub summaries: Vec<RateSummary>,
    /// Fit of the median `‖T̂ − T‖_F²` against the predicted rate.
    pub fit_frobenius: LineFit,
    /// Same for `‖T̂ − T‖_n²`.
    pub fit_empirical: LineFit,
    /// Cells ordered by `(n, replication)`.
    pub cells: Vec<RateCell>,
}

/// Assemble the report; `cells` may arrive in any order.
pub fn summarize_rate(plan: &RatePlan, mut cells: Vec<RateCell>) -> Result<RateReport> {
    cells.sort_by_key(|c| (c.n, c.replication));
    let mut summaries = Vec::with_capacity(plan.config.n_grid.len());
    for (g, &n) in plan.config.n_grid.iter().enumerate() {
        let here: Vec<&RateCell> = cells.iter().filter(|c| c.n == n).collect();
        if here.is_empty() {
            return Err(Error::InvalidConfig(alloc::format!("no cells for n = {n}")));
        }
        let f: Vec<f64> = here.iter().map(|c| c.error_frobenius_sq).collect();
        let e: Vec<f64> = here.iter().map(|c| c.error_empirical_sq).collect();
        let covered: Vec<bool> = here.iter().filter_map(|c| c.within_bound).collect();
        summaries.push(RateSummary {
            n,
            lambda: plan.lambdas[g],
            predicted_rate: plan.rates[g],
            risk_bound: plan.risk_bounds[g],
            frobenius_sq: Quantiles::of(&f),
            empirical_sq: Quantiles::of(&e),
            max_iters: here.iter().filter(|c| c.status == SolveStatus::MaxIters).count(),
            diverged: here.iter().filter(|c| c.status == SolveStatus::Diverged).count(),
            bound_coverage: (!covered.is_empty())
                .then(|| covered.iter().filter(|b| **b).count() as f64 / covered.len() as f64),
        });
    }
    let rates: Vec<f64> = summaries.iter().map(|s| s.predicted_rate).collect();
    let mf: Vec<f64> = summaries.iter().map(|s| s.frobenius_sq.q50).collect();
    let me: Vec<f64> = summaries.iter().map(|s| s.empirical_sq.q50).collect();
    Ok(RateReport {
        config: plan.config.clone(),
        width: plan.width,
        width_std_error: plan.width_std_error,
        c_u: plan.c_u,
        c_ell: plan.c_ell,
        summaries,
        fit_frobenius: fit_log_log(&rates, &mf)?,
        fit_empirical: fit_log_log(&rates, &me)?,
        cells,
    })
}

/// Sequential reference driver.
pub fn rate_experiment(config: &RateExperimentConfig) -> Result<RateReport> {
    let plan = plan_rate_experiment(config)?;
    let mut cells = Vec::new();
    for &n in &config.n_grid {
        for rep in 0..config.replications {
            cells.push(run_rate_cell(&plan, n, rep)?);
        }
    }
    summarize_rate(&plan, cells)
}

/// Ratios outside this band are flagged in width tables.
pub const WIDTH_RATIO_BAND: [f64; 2] = [0.2, 5.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthRow {
    pub kind: RegularizerSpec,
    pub shape: Vec<usize>,
    pub seed: u64,
    pub draws: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub rate_form: WidthRate,
    pub rate: f64,
    pub ratio: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthReport {
    pub draws: usize,
    pub seed: u64,
    pub rows: Vec<WidthRow>,
    /// Per kind, max over min of the ratio column.
    pub ratio_spread: Vec<(RegularizerSpec, f64)>,
}

/// Seed of the `(kind, shape)` cell of a width table.
pub fn width_cell_seed(seed: u64, kind: usize, shape: usize) -> u64 {
    rng::derive_seed(seed, &[kind as u64, shape as u64])
}

pub fn width_row(estimate: &crate::spectral::WidthEstimate) -> WidthRow {
    let ratio = estimate.mean / estimate.rate_value;
    WidthRow {
        kind: estimate.kind.clone(),
        shape: estimate.shape.clone(),
        seed: estimate.seed,
        draws: estimate.draws,
        estimate: estimate.mean,
        std_error: estimate.std_error,
        rate_form: estimate.lemma_bound_form,
        rate: estimate.rate_value,
        ratio,
        flagged: !(ratio >= WIDTH_RATIO_BAND[0] && ratio <= WIDTH_RATIO_BAND[1]),
    }
}

/// Rows ordered kind-major; the spread column groups by kind.
pub fn width_report(kinds: &[RegularizerSpec], draws: usize, seed: u64, rows: Vec<WidthRow>) -> WidthReport {
    let ratio_spread = kinds
        .iter()
        .map(|k| {
            let r: Vec<f64> = rows.iter().filter(|row| &row.kind == k).map(|row| row.ratio).collect();
            let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
            (k.clone(), hi / lo)
        })
        .collect();
    WidthReport { draws, seed, rows, ratio_spread }
}

/// Sequential reference driver.
pub fn width_experiment(kinds: &[RegularizerSpec], shapes: &[Vec<usize>], draws: usize, seed: u64) -> Result<WidthReport> {
    let mut rows = Vec::new();
    for (i, k) in kinds.iter().enumerate() {
        for (j, s) in shapes.iter().enumerate() {
            let est = gaussian_width_mc(k, s, draws, width_cell_seed(seed, i, j), &HopmOptions::default())?;
            rows.push(width_row(&est));
        }
    }
    Ok(width_report(kinds, draws, seed, rows))
}
