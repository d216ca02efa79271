//! Greedy random packings of rescaled hypercubes, their independent
//! verification, and the mechanical preconditions of a Fano-type lower
//! bound.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::math;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PackingKind {
    /// Vertices of `{−a, a}^d` pairwise at Hamming distance at least `d/3`.
    Full,
    /// `s`-sparse sign vectors.
    Sparse { s: usize },
    /// `d1 x d2` matrices of rank at most `r`: a full packing on a
    /// `max(d1, d2) x r` block.
    Lowrank { d1: usize, d2: usize, r: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingSet {
    pub kind: PackingKind,
    /// Length of each element.
    pub dim: usize,
    pub delta: f64,
    /// Flat elements; low-rank elements are row-major `d1 x d2`.
    pub elements: Vec<Vec<f64>>,
    /// Declared squared-distance window.
    pub window: [f64; 2],
    pub min_dist_sq: f64,
    pub max_dist_sq: f64,
    pub candidates_drawn: usize,
}

impl PackingSet {
    pub fn cardinality(&self) -> usize {
        self.elements.len()
    }

    /// `log m / d` for the packed dimension.
    pub fn log_m_per_dim(&self) -> f64 {
        let d = match self.kind {
            PackingKind::Lowrank { d1, d2, r } => d1.max(d2) * r,
            _ => self.dim,
        };
        math::ln(self.cardinality() as f64) / d as f64
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Greedy construction: draw up to `budget` random candidates and keep each
/// one whose distance to every kept element meets the acceptance rule.
pub fn hypercube_packing(d: usize, delta: f64, kind: PackingKind, budget: usize, seed: u64) -> Result<PackingSet> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidConfig(alloc::format!("delta must be positive, got {delta}")));
    }
    let mut r = rng::substream(seed, 0);
    match kind {
        PackingKind::Full => {
            if d < 6 {
                return Err(Error::InvalidConfig(alloc::format!("full packing needs d >= 6, got {d}")));
            }
            let a = math::sqrt(3.0) * delta / (4.0 * math::sqrt(d as f64));
            let (kept, drawn) = greedy(budget, |r: &mut rng::StreamRng| sign_vector(r, d, a), &mut r, |x, y| {
                3 * hamming(x, y) >= d
            });
            finish(kind, d, delta, kept, drawn, [delta * delta / 4.0, delta * delta])
        }
        PackingKind::Sparse { s } => {
            if s == 0 || s > d {
                return Err(Error::InvalidConfig(alloc::format!("sparsity {s} must lie in 1..={d}")));
            }
            let a = delta / (2.0 * math::sqrt(s as f64));
            let unit = a * a;
            let draw = |r: &mut rng::StreamRng| {
                let mut v = vec![0.0; d];
                for i in index::sample(r, d, s).into_iter() {
                    v[i] = if r.random::<bool>() { a } else { -a };
                }
                v
            };
            // distance in units of a²: 2 * (squared distance) >= s * a²
            let (kept, drawn) = greedy(budget, draw, &mut r, |x, y| 2.0 * sq_dist(x, y) >= s as f64 * unit * (1.0 - 1e-12));
            finish(kind, d, delta, kept, drawn, [delta * delta / 8.0, delta * delta])
        }
        PackingKind::Lowrank { d1, d2, r: rank } => {
            if rank == 0 || rank > d1.min(d2) || d1 * d2 != d {
                return Err(Error::InvalidConfig(alloc::format!(
                    "low-rank packing needs 1 <= r <= min(d1, d2) and d = d1*d2 (d={d}, d1={d1}, d2={d2}, r={rank})"
                )));
            }
            let big = d1.max(d2);
            let block = big * rank;
            if block < 6 {
                return Err(Error::InvalidConfig(alloc::format!("low-rank block has {block} < 6 entries")));
            }
            let a = math::sqrt(3.0) * delta / (4.0 * math::sqrt(block as f64));
            let draw = |r: &mut rng::StreamRng| {
                let b = sign_vector(r, block, a);
                let mut m = vec![0.0; d];
                for i in 0..big {
                    for j in 0..rank {
                        // the block sits in the first `rank` columns (or rows)
                        let (row, col) = if d1 >= d2 { (i, j) } else { (j, i) };
                        m[row * d2 + col] = b[i * rank + j];
                    }
                }
                m
            };
            let (kept, drawn) = greedy(budget, draw, &mut r, |x, y| 3 * hamming(x, y) >= block);
            finish(kind, d, delta, kept, drawn, [delta * delta / 4.0, delta * delta])
        }
    }
}

fn sign_vector<R: Rng>(r: &mut R, d: usize, a: f64) -> Vec<f64> {
    (0..d).map(|_| if r.random::<bool>() { a } else { -a }).collect()
}

/// Number of coordinates whose signs differ (zero counts as its own sign).
fn hamming(x: &[f64], y: &[f64]) -> usize {
    x.iter().zip(y).filter(|(a, b)| a.signum() != b.signum() || (**a == 0.0) != (**b == 0.0)).count()
}

fn greedy(
    budget: usize,
    mut draw: impl FnMut(&mut rng::StreamRng) -> Vec<f64>,
    r: &mut rng::StreamRng,
    accept: impl Fn(&[f64], &[f64]) -> bool,
) -> (Vec<Vec<f64>>, usize) {
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for _ in 0..budget {
        let c = draw(r);
        if kept.iter().all(|k| accept(k, &c)) {
            kept.push(c);
        }
    }
    (kept, budget)
}

fn finish(
    kind: PackingKind,
    dim: usize,
    delta: f64,
    elements: Vec<Vec<f64>>,
    drawn: usize,
    window: [f64; 2],
) -> Result<PackingSet> {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..elements.len() {
        for j in 0..i {
            let v = sq_dist(&elements[i], &elements[j]);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let set = PackingSet {
        kind,
        dim,
        delta,
        elements,
        window,
        min_dist_sq: if lo.is_finite() { lo } else { 0.0 },
        max_dist_sq: hi,
        candidates_drawn: drawn,
    };
    if set.elements.len() < 2 {
        return Err(Error::BudgetExhausted(set));
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingVerification {
    pub passed: bool,
    pub cardinality: usize,
    pub min_dist_sq: f64,
    pub max_dist_sq: f64,
    /// Smallest pairwise count of differing coordinates.
    pub min_hamming: usize,
    pub max_rank: usize,
    /// First pair (in lexicographic order) violating a check.
    pub offending_pair: Option<(usize, usize)>,
}

/// Check every pair of a packing against its declared window, the Hamming
/// separation of the hypercube kinds and the rank of low-rank elements.
pub fn verify_packing(set: &PackingSet) -> Result<PackingVerification> {
    let m = set.elements.len();
    let slack = 1e-12 * set.window[1];
    let mut out = PackingVerification {
        passed: m >= 2,
        cardinality: m,
        min_dist_sq: f64::INFINITY,
        max_dist_sq: 0.0,
        min_hamming: usize::MAX,
        max_rank: 0,
        offending_pair: None,
    };
    for (idx, e) in set.elements.iter().enumerate() {
        if e.len() != set.dim {
            return Err(Error::LengthMismatch { expected: set.dim, found: e.len() });
        }
        if let PackingKind::Lowrank { d1, d2, r } = set.kind {
            let rank = linalg::rank(&DMatrix::from_row_slice(d1, d2, e), 0.0)?;
            out.max_rank = out.max_rank.max(rank);
            if rank > r && out.offending_pair.is_none() {
                out.passed = false;
                out.offending_pair = Some((idx, idx));
            }
        }
    }
    for i in 0..m {
        for j in (i + 1)..m {
            let (x, y) = (&set.elements[i], &set.elements[j]);
            let mut dist = 0.0;
            let mut diff = 0usize;
            for k in 0..set.dim {
                let t = x[k] - y[k];
                dist += t * t;
                if t != 0.0 {
                    diff += 1;
                }
            }
            out.min_dist_sq = out.min_dist_sq.min(dist);
            out.max_dist_sq = out.max_dist_sq.max(dist);
            out.min_hamming = out.min_hamming.min(diff);
            let mut ok = dist >= set.window[0] - slack && dist <= set.window[1] + slack;
            match set.kind {
                PackingKind::Full => ok &= 3 * diff >= set.dim,
                PackingKind::Lowrank { d1, d2, r } => ok &= 3 * diff >= d1.max(d2) * r,
                PackingKind::Sparse { .. } => {}
            }
            if !ok {
                out.passed = false;
                if out.offending_pair.is_none() {
                    out.offending_pair = Some((i, j));
                }
            }
        }
    }
    if m < 2 {
        out.min_dist_sq = 0.0;
        out.min_hamming = 0;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanoReport {
    pub n: usize,
    pub c_u: f64,
    pub delta: f64,
    pub log_m: f64,
    /// `128 n δ²`
    pub cardinality_threshold: f64,
    pub cardinality_ok: bool,
    /// `[n δ² / c_u², 8 n δ² / c_u²]`
    pub window: [f64; 2],
    pub window_ok: bool,
    pub offending_pair: Option<(usize, usize)>,
    pub passed: bool,
}

/// Check `log m ≥ 128 n δ²` and `n δ²/c_u² ≤ ‖A_i − A_j‖_F² ≤ 8 n δ²/c_u²`
/// for all pairs.
pub fn fano_precondition_check(pack: &PackingSet, n: usize, c_u: f64, delta: f64) -> Result<FanoReport> {
    if pack.elements.is_empty() {
        return Err(Error::InvalidConfig("packing set is empty".into()));
    }
    if n == 0 || !(c_u > 0.0) || !(delta > 0.0) {
        return Err(Error::InvalidConfig("n, c_u and delta must be positive".into()));
    }
    let nf = n as f64;
    let log_m = math::ln(pack.elements.len() as f64);
    let threshold = 128.0 * nf * delta * delta;
    let lo = nf * delta * delta / (c_u * c_u);
    let hi = 8.0 * lo;
    let slack = 1e-12 * hi;
    let mut offending = None;
    'outer: for i in 0..pack.elements.len() {
        for j in (i + 1)..pack.elements.len() {
            let v = sq_dist(&pack.elements[i], &pack.elements[j]);
            if v < lo - slack || v > hi + slack {
                offending = Some((i, j));
                break 'outer;
            }
        }
    }
    let cardinality_ok = log_m >= threshold;
    let window_ok = offending.is_none();
    Ok(FanoReport {
        n,
        c_u,
        delta,
        log_m,
        cardinality_threshold: threshold,
        cardinality_ok,
        window: [lo, hi],
        window_ok,
        offending_pair: offending,
        passed: cardinality_ok && window_ok,
    })
}

/// The `δ` for which a packing with window `[δ_p²/4, δ_p²]` sits inside the
/// Fano window: `δ = δ_p c_u / (2√n)`.
pub fn fano_delta(pack_delta: f64, c_u: f64, n: usize) -> f64 {
    pack_delta * c_u / (2.0 * math::sqrt(n as f64))
}
