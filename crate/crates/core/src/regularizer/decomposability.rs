//! Weak decomposability margins and compatibility constants.

use super::subspace::{ProjectorRole, SubspaceSpec, Which};
use super::RegularizerSpec;
use crate::error::{Error, Result};
use crate::math;
use crate::rng;
use crate::tensor::DenseTensor;

/// `R(A + B) − R(A) − c_R R(B)` after projecting `A` onto the complement
/// of `sub_a` and `B` onto `sub_b`.
pub fn decomposability_margin(
    spec: &RegularizerSpec,
    sub_a: &SubspaceSpec,
    sub_b: &SubspaceSpec,
    a: &DenseTensor,
    b: &DenseTensor,
) -> Result<f64> {
    let a = sub_a.project(a, Which::Complement)?;
    let b = sub_b.project(b, Which::Space)?;
    let sum = a.add(&b)?;
    Ok(spec.eval(&sum)? - spec.eval(&a)? - spec.c_r() * spec.eval(&b)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompatibilityOptions {
    pub samples: usize,
    pub ascent_steps: usize,
    pub seed: u64,
}

impl Default for CompatibilityOptions {
    fn default() -> Self {
        Self { samples: 10_000, ascent_steps: 100, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Compatibility {
    pub analytic_bound: f64,
    /// `None` when the primal norm cannot be evaluated.
    pub mc_estimate: Option<f64>,
}

/// Closed-form compatibility bound of a matched pair.
pub fn analytic_compatibility(spec: &RegularizerSpec, sub: &SubspaceSpec) -> Result<f64> {
    let support = |s: Option<usize>| s.map(|v| v as f64).ok_or(Error::UnmatchedPair);
    match (spec, sub) {
        (RegularizerSpec::EntryL1, SubspaceSpec::SupportEntries { .. }) => support(sub.support_size()),
        (RegularizerSpec::FiberGroup { mode }, SubspaceSpec::SupportFibers { mode: m, .. }) if mode == m => {
            support(sub.support_size())
        }
        (RegularizerSpec::SliceFrob { axes }, SubspaceSpec::SupportSlices { axes: a, .. }) if same_pair(*axes, *a) => {
            support(sub.support_size())
        }
        (
            RegularizerSpec::SliceNuclear { axes },
            SubspaceSpec::SlicewiseProjectors { axes: a, rows, cols, role: ProjectorRole::ASpace },
        ) if same_pair(*axes, *a) => Ok(rows.iter().zip(cols).map(|(p, q)| (p.rank() + q.rank()) as f64).sum()),
        (
            RegularizerSpec::MatricizedNuclearSum,
            SubspaceSpec::TuckerProjectors { projectors, role: ProjectorRole::ASpace },
        ) => Ok(projectors.ranks().into_iter().max().unwrap_or(0) as f64),
        (
            RegularizerSpec::TensorSpectralDualOnly,
            SubspaceSpec::TuckerProjectors { projectors, role: ProjectorRole::ASpace },
        ) => {
            let r = projectors.ranks().into_iter().max().unwrap_or(0) as f64;
            Ok(r * r)
        }
        _ => Err(Error::UnmatchedPair),
    }
}

fn same_pair(a: [usize; 2], b: [usize; 2]) -> bool {
    a == b || (a[0] == b[1] && a[1] == b[0])
}

/// Compatibility constant `sup_{A ∈ sub, A ≠ 0} R(A)² / ‖A‖_F²`: the closed
/// form bound for the matched pair plus a sampled lower estimate refined by
/// projected gradient ascent.
pub fn compatibility(spec: &RegularizerSpec, sub: &SubspaceSpec, opts: &CompatibilityOptions) -> Result<Compatibility> {
    sub.validate()?;
    let analytic_bound = analytic_compatibility(spec, sub)?;
    if !spec.has_primal() {
        return Ok(Compatibility { analytic_bound, mc_estimate: None });
    }
    let shape = sub.shape();
    let mut r = rng::substream(opts.seed, 0);
    let mut best: Option<(f64, DenseTensor)> = None;
    for _ in 0..opts.samples.max(1) {
        let g = rng::normal_tensor(&mut r, &shape);
        let x = sub.project(&g, Which::Space)?;
        let norm = x.frobenius();
        if norm == 0.0 {
            continue;
        }
        let x = x.scale(1.0 / norm);
        let rx = spec.eval(&x)?;
        let ratio = rx * rx;
        if best.as_ref().map_or(true, |(b, _)| ratio > *b) {
            best = Some((ratio, x));
        }
    }
    let Some((mut value, mut x)) = best else {
        // the subspace is {0}
        return Ok(Compatibility { analytic_bound, mc_estimate: Some(0.0) });
    };

    // f(x) = R(x)² on the unit sphere of the subspace; the Riemannian
    // ascent direction is 2R(g − R x) for g ∈ ∂R(x).
    let mut step = 0.5 / value.max(1e-12);
    for _ in 0..opts.ascent_steps {
        let rx = math::sqrt(value);
        let g = spec.subgradient(&x)?;
        let dir = sub.project(&g.axpy(-rx, &x)?, Which::Space)?;
        if dir.frobenius() < 1e-14 {
            break;
        }
        let mut improved = false;
        for _ in 0..30 {
            let cand = x.axpy(2.0 * rx * step, &dir)?;
            let n = cand.frobenius();
            if n > 0.0 {
                let cand = cand.scale(1.0 / n);
                let rc = spec.eval(&cand)?;
                let v = rc * rc;
                if v > value {
                    value = v;
                    x = cand;
                    improved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
        // allow the step to grow back after a success
        step *= 2.0;
    }
    Ok(Compatibility { analytic_bound, mc_estimate: Some(value) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn entry_l1_four_entries_reaches_four() {
        let sub = SubspaceSpec::SupportEntries {
            shape: [3, 3, 3],
            indices: vec![[0, 0, 0], [1, 2, 0], [2, 2, 2], [0, 1, 2]],
        };
        let c = compatibility(&RegularizerSpec::EntryL1, &sub, &CompatibilityOptions::default()).unwrap();
        assert_eq!(c.analytic_bound, 4.0);
        let est = c.mc_estimate.unwrap();
        assert!(est <= 4.0 * (1.0 + 1e-9) && est > 4.0 - 1e-6, "{est}");
    }

    #[test]
    fn unmatched_pair_rejected() {
        let sub = SubspaceSpec::SupportSlices { shape: [2, 2, 2], axes: [0, 1], slices: vec![0] };
        assert_eq!(
            compatibility(&RegularizerSpec::EntryL1, &sub, &CompatibilityOptions::default()),
            Err(Error::UnmatchedPair)
        );
    }

    #[test]
    fn zero_b_gives_zero_margin() {
        let sub = SubspaceSpec::SupportEntries { shape: [2, 2, 2], indices: vec![[0, 0, 0]] };
        let mut r = rng::substream(4, 0);
        let a = rng::normal_tensor(&mut r, &[2, 2, 2]);
        let b = DenseTensor::zeros(&[2, 2, 2]);
        let m = decomposability_margin(&RegularizerSpec::EntryL1, &sub, &sub, &a, &b).unwrap();
        assert!(m.abs() < 1e-12);
    }
}
