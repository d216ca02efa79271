//! Deterministic JSON and CSV emission.
//!
//! JSON fields follow struct declaration order. CSV output starts with a
//! `config` record holding the JSON configuration, then one record per cell
//! and a summary block; records have varying widths.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tensorreg_core::datagen::{ModelClassSpec, SpectralExtrema, VarModel};
use tensorreg_core::experiment::{RateReport, WidthReport};
use tensorreg_core::packing::{FanoReport, PackingSet, PackingVerification};
use tensorreg_core::solver::SolveStatus;
use tensorreg_core::RegularizerSpec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

pub trait Report: Serialize + DeserializeOwned {
    fn write_csv(&self, w: &mut csv::Writer<Vec<u8>>) -> Result<()>;
}

fn record<I, S>(w: &mut csv::Writer<Vec<u8>>, fields: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(fields)?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn status(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxIters => "max_iters",
        SolveStatus::Diverged => "diverged",
    }
}

fn shape(s: &[usize]) -> String {
    s.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

pub fn to_bytes<R: Report>(report: &R, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Json => {
            let mut s = serde_json::to_vec_pretty(report)?;
            s.push(b'\n');
            Ok(s)
        }
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
            report.write_csv(&mut w)?;
            w.into_inner().map_err(|e| Error::Usage(format!("csv flush: {e}")))
        }
    }
}

/// Write to `out`, or to stdout when `out` is `None`.
pub fn emit<R: Report>(report: &R, format: Format, out: Option<&Path>) -> Result<()> {
    let bytes = to_bytes(report, format)?;
    match out {
        Some(p) => fs::write(p, bytes).map_err(|e| Error::io(p, e)),
        None => std::io::stdout().write_all(&bytes).map_err(|e| Error::io("<stdout>", e)),
    }
}

pub fn parse_json<R: Report>(bytes: &[u8]) -> Result<R> {
    Ok(serde_json::from_slice(bytes)?)
}

impl Report for RateReport {
    fn write_csv(&self, w: &mut csv::Writer<Vec<u8>>) -> Result<()> {
        record(w, ["config".to_string(), serde_json::to_string(&self.config)?])?;
        record(w, ["width", &self.width.to_string(), &self.width_std_error.to_string()])?;
        record(w, ["c_u", &self.c_u.to_string()])?;
        record(w, ["c_ell", &self.c_ell.to_string()])?;
        record(
            w,
            [
                "n",
                "replication",
                "lambda",
                "error_frobenius_sq",
                "error_empirical_sq",
                "status",
                "iterations",
                "kkt_residual",
                "within_bound",
            ],
        )?;
        for c in &self.cells {
            record(
                w,
                [
                    c.n.to_string(),
                    c.replication.to_string(),
                    c.lambda.to_string(),
                    c.error_frobenius_sq.to_string(),
                    c.error_empirical_sq.to_string(),
                    status(c.status).to_string(),
                    c.iterations.to_string(),
                    c.kkt_residual.to_string(),
                    c.within_bound.map(|b| b.to_string()).unwrap_or_default(),
                ],
            )?;
        }
        record(
            w,
            [
                "summary_n",
                "predicted_rate",
                "lambda",
                "risk_bound",
                "median_frobenius_sq",
                "q10_frobenius_sq",
                "q90_frobenius_sq",
                "median_empirical_sq",
                "max_iters",
                "diverged",
                "bound_coverage",
            ],
        )?;
        for s in &self.summaries {
            record(
                w,
                [
                    s.n.to_string(),
                    s.predicted_rate.to_string(),
                    s.lambda.to_string(),
                    opt(s.risk_bound),
                    s.frobenius_sq.q50.to_string(),
                    s.frobenius_sq.q10.to_string(),
                    s.frobenius_sq.q90.to_string(),
                    s.empirical_sq.q50.to_string(),
                    s.max_iters.to_string(),
                    s.diverged.to_string(),
                    opt(s.bound_coverage),
                ],
            )?;
        }
        record(w, ["fit", "slope", "intercept", "r_squared"])?;
        for (name, f) in [("frobenius", &self.fit_frobenius), ("empirical", &self.fit_empirical)] {
            record(w, [name.to_string(), f.slope.to_string(), f.intercept.to_string(), f.r_squared.to_string()])?;
        }
        Ok(())
    }
}

impl Report for WidthReport {
    fn write_csv(&self, w: &mut csv::Writer<Vec<u8>>) -> Result<()> {
        record(w, ["draws".to_string(), self.draws.to_string()])?;
        record(w, ["seed".to_string(), self.seed.to_string()])?;
        record(w, ["kind", "params", "shape", "seed", "estimate", "std_error", "rate_form", "rate", "ratio", "flagged"])?;
        for r in &self.rows {
            record(
                w,
                [
                    r.kind.name().to_string(),
                    serde_json::to_string(&r.kind)?,
                    shape(&r.shape),
                    r.seed.to_string(),
                    r.estimate.to_string(),
                    r.std_error.to_string(),
                    r.rate_form.tag().to_string(),
                    r.rate.to_string(),
                    r.ratio.to_string(),
                    r.flagged.to_string(),
                ],
            )?;
        }
        record(w, ["spread_kind", "ratio_max_over_min"])?;
        for (k, s) in &self.ratio_spread {
            record(w, [serde_json::to_string(k)?, s.to_string()])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenReport {
    pub seed: u64,
    pub class: Option<ModelClassSpec>,
    pub var_model: Option<VarModel>,
    pub n: usize,
    pub noise_sigma: f64,
    pub manifest: PathBuf,
    pub truth_frobenius: f64,
}

impl Report for GenReport {
    fn write_csv(&self, w: &mut csv::Writer<Vec<u8>>) -> Result<()> {
        record(w, ["field", "value"])?;
        record(w, ["seed".to_string(), self.seed.to_string()])?;
        record(w, ["class".to_string(), serde_json::to_string(&self.class)?])?;
        record(w, ["var_model".to_string(), serde_json::to_string(&self.var_model)?])?;
        record(w, ["n".to_string(), self.n.to_string()])?;
        record(w, ["noise_sigma".to_string(), self.noise_sigma.to_string()])?;
        record(w, ["manifest".to_string(), self.manifest.display().to_string()])?;
        record(w, ["truth_frobenius".to_string(), self.truth_frobenius.to_string()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub regularizer: RegularizerSpec,
    pub lambda: f64,
    /// Width behind an automatic `λ`.
    pub width: Option<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub objective: f64,
    pub objective_trace: Vec<f64>,
    pub error_frobenius_sq: Option<f64>,
    pub estimate: Option<PathBuf>,
}

impl Report for SolveReport {
    fn write_csv(&self, w: &mut csv::Writer<Vec<u8>>) -> Result<()> {
        record(w, ["field", "value"])?;
        record(w, ["regularizer".to_string(), serde_json::to_string(&self.regularizer)?])?;
        record(w, ["lambda".to_string(), self.lambda.to_string()])?;
        record(w, ["width".to_string(), opt(self.width)])?;
        record(w, ["status".to_string(), status(self.status).to_string()])?;
        record(w, ["iterations".to_string(), self.iterations.to_string()])?;
        record(w, ["kkt_residual".to_string(), self.kkt_residual.to_string()])?;
        record(w, ["objective".to_string(), self.objective.to_string()])?;
        record(w, ["error_frobenius_sq".to_string(), opt(self.error_frobenius_sq)])?;
        record(w, ["estimate".to_string(), self.estimate.as_ref().map(|p| p.display().to_string()).unwrap_or_default()])?;
        record(w, ["iteration", "objective"])?;
        for (i, v) in self.objective_trace.iter().enumerate() {
            record(w, [i.to_string(), v.to_string()])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingReport {
    pub seed: u64,
    pub budget: usize,
    /// False when the budget ran out before two elements were accepted.
    pub complete: bool,
    pub set: PackingSet,
    pub log_m_per_dim: f64,
    pub verification: PackingVerification,
    pub fano: Option<FanoReport>,
}

impl Report for PackingReport {
    fn write_csv(&self, w: &mut csv::Writer<Vec<u8>>) -> Result<()> {
        record(w, ["field", "value"])?;
        record(w, ["kind".to_string(), serde_json::to_string(&self.set.kind)?])?;
        record(w, ["seed".to_string(), self.seed.to_string()])?;
        record(w, ["budget".to_string(), self.budget.to_string()])?;
        record(w, ["complete".to_string(), self.complete.to_string()])?;
        record(w, ["dim".to_string(), self.set.dim.to_string()])?;
        record(w, ["delta".to_string(), self.set.delta.to_string()])?;
        record(w, ["cardinality".to_string(), self.set.cardinality().to_string()])?;
        record(w, ["log_m_per_dim".to_string(), self.log_m_per_dim.to_string()])?;
        record(w, ["min_dist_sq".to_string(), self.set.min_dist_sq.to_string()])?;
        record(w, ["max_dist_sq".to_string(), self.set.max_dist_sq.to_string()])?;
        record(w, ["verified".to_string(), self.verification.passed.to_string()])?;
        if let Some(f) = &self.fano {
            record(w, ["fano".to_string(), serde_json::to_string(f)?])?;
        }
        record(w, ["element"])?;
        for (i, e) in self.set.elements.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(e.iter().map(|v| v.to_string()));
            record(w, row)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarExtremaReport {
    pub model: VarModel,
    pub spectral_radius: f64,
    pub extrema: SpectralExtrema,
}

impl Report for VarExtremaReport {
    fn write_csv(&self, w: &mut csv::Writer<Vec<u8>>) -> Result<()> {
        record(w, ["field", "value"])?;
        record(w, ["model".to_string(), serde_json::to_string(&self.model)?])?;
        record(w, ["spectral_radius".to_string(), self.spectral_radius.to_string()])?;
        record(w, ["mu_min".to_string(), self.extrema.mu_min.to_string()])?;
        record(w, ["mu_max".to_string(), self.extrema.mu_max.to_string()])?;
        record(w, ["grid".to_string(), self.extrema.grid.to_string()])
    }
}
