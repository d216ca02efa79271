//! TNS1 tensor files and JSON problem manifests.
//!
//! TNS1 layout, all little endian: the magic `TNS1`, a `u32` order, `order`
//! `u64` extents, then the entries as `f64` in row-major order.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tensorreg_core::solver::RegressionProblem;
use tensorreg_core::DenseTensor;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TNS1";

pub fn encode_tns(t: &DenseTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * t.order() + 8 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(t.order() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn take<'a>(buf: &mut &'a [u8], n: usize, path: &Path) -> Result<&'a [u8]> {
    if buf.len() < n {
        return Err(Error::Format { path: path.into(), msg: "truncated TNS1 file".into() });
    }
    let (head, rest) = buf.split_at(n);
    *buf = rest;
    Ok(head)
}

pub fn decode_tns(bytes: &[u8], path: &Path) -> Result<DenseTensor> {
    let bad = |msg: String| Error::Format { path: path.into(), msg };
    let mut buf = bytes;
    if take(&mut buf, 4, path)? != MAGIC {
        return Err(bad("missing TNS1 magic".into()));
    }
    let order = u32::from_le_bytes(take(&mut buf, 4, path)?.try_into().unwrap()) as usize;
    let mut shape = Vec::with_capacity(order);
    for _ in 0..order {
        let d = u64::from_le_bytes(take(&mut buf, 8, path)?.try_into().unwrap());
        shape.push(usize::try_from(d).map_err(|_| bad(format!("extent {d} too large")))?);
    }
    let len = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| bad("shape product overflows".into()))?;
    if buf.len() != len * 8 {
        return Err(bad(format!("expected {} data bytes, found {}", len * 8, buf.len())));
    }
    let data = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(DenseTensor::new(shape, data)?)
}

pub fn write_tns(path: &Path, t: &DenseTensor) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_tns(t)).map_err(|e| Error::io(path, e))
}

pub fn read_tns(path: &Path) -> Result<DenseTensor> {
    let mut bytes = Vec::new();
    fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| Error::io(path, e))?;
    decode_tns(&bytes, path)
}

/// Describes a problem stored as TNS1 files. Paths are relative to the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub n: usize,
    /// Number of covariate axes.
    pub split: usize,
    pub covariate_shape: Vec<usize>,
    pub response_shape: Vec<usize>,
    pub noise_sigma: f64,
    /// Tensor of shape `[n] ++ covariate_shape`.
    pub covariates: PathBuf,
    /// Tensor of shape `[n] ++ response_shape`.
    pub responses: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Write `covariates.tns`, `responses.tns`, `truth.tns` (when known) and
/// `manifest.json` into `dir`.
pub fn write_problem(dir: &Path, problem: &RegressionProblem) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n = problem.n();
    let stacked = |shape: &[usize], data: &[f64]| -> Result<DenseTensor> {
        let mut s = vec![n];
        s.extend_from_slice(shape);
        Ok(DenseTensor::new(s, data.to_vec())?)
    };
    write_tns(&dir.join("covariates.tns"), &stacked(problem.covariate_shape(), problem.covariate_data())?)?;
    write_tns(&dir.join("responses.tns"), &stacked(problem.response_shape(), problem.response_data())?)?;
    let truth = match &problem.truth {
        Some(t) => {
            write_tns(&dir.join("truth.tns"), t)?;
            Some(PathBuf::from("truth.tns"))
        }
        None => None,
    };
    let manifest = Manifest {
        n,
        split: problem.split(),
        covariate_shape: problem.covariate_shape().to_vec(),
        response_shape: problem.response_shape().to_vec(),
        noise_sigma: problem.noise_sigma,
        covariates: "covariates.tns".into(),
        responses: "responses.tns".into(),
        truth,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn check_stacked(t: &DenseTensor, n: usize, shape: &[usize], path: &Path) -> Result<()> {
    let mut want = vec![n];
    want.extend_from_slice(shape);
    if t.shape() != want.as_slice() {
        return Err(Error::Format { path: path.into(), msg: format!("expected shape {want:?}, found {:?}", t.shape()) });
    }
    Ok(())
}

pub fn read_problem(manifest_path: &Path) -> Result<RegressionProblem> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let m: Manifest = serde_json::from_str(&text)?;
    if m.split != m.covariate_shape.len() {
        return Err(Error::Format { path: manifest_path.into(), msg: "split must equal the covariate order".into() });
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let cov_path = base.join(&m.covariates);
    let resp_path = base.join(&m.responses);
    let x = read_tns(&cov_path)?;
    check_stacked(&x, m.n, &m.covariate_shape, &cov_path)?;
    let y = read_tns(&resp_path)?;
    check_stacked(&y, m.n, &m.response_shape, &resp_path)?;
    let truth = m.truth.as_ref().map(|p| read_tns(&base.join(p))).transpose()?;
    Ok(RegressionProblem::new(m.covariate_shape, m.response_shape, x.into_data(), y.into_data(), m.noise_sigma, truth)?)
}
