//! Matrix kernels: sorted Jacobi SVD, nuclear and spectral norms, singular
//! value soft-thresholding.

use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::math;

/// Singular values at or below this fraction of the largest one count as
/// zero in nuclear norms, ranks and thresholding.
pub const SVD_RELATIVE_TOL: f64 = 1e-12;

const SVD_MAX_ITERS: usize = 10_000;

const JACOBI_MAX_SWEEPS: usize = 80;

/// Thin SVD with singular values sorted in decreasing order.
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v_t: DMatrix<f64>,
}

/// One-sided Jacobi SVD.
///
/// nalgebra's bidiagonal SVD returns wrong factors on a noticeable fraction
/// of rank-deficient inputs (orthogonal projectors among them), so the
/// decomposition is done here by pairwise column rotations, which stay
/// accurate in that regime.
pub fn svd(m: &DMatrix<f64>) -> Result<Svd> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Svd {
            u: DMatrix::zeros(m.nrows(), 0),
            singular_values: Vec::new(),
            v_t: DMatrix::zeros(0, m.ncols()),
        });
    }
    if m.nrows() < m.ncols() {
        let t = jacobi(&m.transpose())?;
        return Ok(Svd { u: t.v_t.transpose(), singular_values: t.singular_values, v_t: t.u.transpose() });
    }
    jacobi(m)
}

/// Tall case (`rows >= cols`): rotate the columns of `A` until they are
/// mutually orthogonal, `A V = U Σ`.
fn jacobi(m: &DMatrix<f64>) -> Result<Svd> {
    let (rows, cols) = m.shape();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::SvdFailure);
    }
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(cols, cols);
    let tol = f64::EPSILON * rows as f64;
    // columns this small are roundoff of the whole matrix
    let floor = {
        let e = f64::EPSILON * m.norm();
        e * e
    };
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                {
                    let (cp, cq) = (a.column(p), a.column(q));
                    for i in 0..rows {
                        alpha += cp[i] * cp[i];
                        beta += cq[i] * cq[i];
                        gamma += cp[i] * cq[i];
                    }
                }
                if gamma == 0.0 || alpha <= floor || beta <= floor || abs(gamma) <= tol * math::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let sign = if zeta < 0.0 { -1.0 } else { 1.0 };
                let t = sign / (abs(zeta) + math::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdFailure);
    }
    let norms: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let top = norms[order[0]];
    let mut u = DMatrix::zeros(rows, cols);
    let mut v_t = DMatrix::zeros(cols, cols);
    let mut singular_values = Vec::with_capacity(cols);
    let mut filled = 0;
    for (k, &j) in order.iter().enumerate() {
        let sigma = norms[j];
        singular_values.push(sigma);
        v_t.row_mut(k).copy_from(&v.column(j).transpose());
        if sigma * sigma > floor && sigma > top * f64::EPSILON {
            u.column_mut(k).copy_from(&(a.column(j) / sigma));
            filled = k + 1;
        }
    }
    complete_orthonormal(&mut u, filled);
    Ok(Svd { u, singular_values, v_t })
}

fn abs(x: f64) -> f64 {
    if x < 0.0 {
        -x
    } else {
        x
    }
}

/// Columns `(p, q) <- (c p - s q, s p + c q)`.
fn rotate(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let (x, y) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = c * x - s * y;
        m[(i, q)] = s * x + c * y;
    }
}

/// Fill columns `from..` with unit vectors orthogonal to everything before:
/// each time the coordinate axis with the largest residual, by Gram-Schmidt.
fn complete_orthonormal(u: &mut DMatrix<f64>, from: usize) {
    let (rows, cols) = u.shape();
    for k in from..cols {
        let mut best: Option<(f64, nalgebra::DVector<f64>)> = None;
        for axis in 0..rows {
            let mut e = nalgebra::DVector::zeros(rows);
            e[axis] = 1.0;
            for _ in 0..2 {
                for j in 0..k {
                    let d = u.column(j).dot(&e);
                    e -= u.column(j) * d;
                }
            }
            let n = e.norm();
            if best.as_ref().map_or(true, |(b, _)| n > *b) {
                best = Some((n, e));
            }
        }
        if let Some((n, e)) = best {
            u.column_mut(k).copy_from(&(e / n));
        }
    }
}

pub fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(svd(m)?.singular_values)
}

fn cutoff(sv: &[f64]) -> f64 {
    sv.first().copied().unwrap_or(0.0) * SVD_RELATIVE_TOL
}

pub fn nuclear_norm(m: &DMatrix<f64>) -> Result<f64> {
    let sv = singular_values(m)?;
    let tol = cutoff(&sv);
    Ok(sv.iter().filter(|&&s| s > tol).sum())
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0.0);
    }
    // The top eigenvalue of the smaller Gram matrix carries the same relative
    // accuracy as a full SVD for the largest singular value.
    let gram = if m.nrows() <= m.ncols() { m * m.transpose() } else { m.transpose() * m };
    let eig = SymmetricEigen::try_new(gram, 5.0 * f64::EPSILON, SVD_MAX_ITERS).ok_or(Error::SvdFailure)?;
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    Ok(math::sqrt(top.max(0.0)))
}

/// Numerical rank with the relative cutoff [`SVD_RELATIVE_TOL`] unless a
/// larger `rel_tol` is supplied.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> Result<usize> {
    let sv = singular_values(m)?;
    let tol = sv.first().copied().unwrap_or(0.0) * rel_tol.max(SVD_RELATIVE_TOL);
    Ok(sv.iter().filter(|&&s| s > tol).count())
}

/// Singular value soft-thresholding `U max(Σ - t, 0) Vᵀ`, the proximal map
/// of `t‖·‖_*`.
pub fn svt(z: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::InvalidConfig(alloc::format!("threshold must be finite and >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(z.clone());
    }
    let s = svd(z)?;
    let tol = cutoff(&s.singular_values);
    let mut out = DMatrix::zeros(z.nrows(), z.ncols());
    for (k, &sigma) in s.singular_values.iter().enumerate() {
        let shrunk = sigma - t;
        if sigma <= tol || shrunk <= 0.0 {
            // sorted, nothing further survives
            break;
        }
        let u = s.u.column(k);
        let v = s.v_t.row(k);
        out += (u * v) * shrunk;
    }
    Ok(out)
}

/// `U_r V_rᵀ` over the numerically nonzero singular values: the minimal-norm
/// subgradient direction of the nuclear norm.
pub fn nuclear_subgradient(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = svd(m)?;
    let tol = cutoff(&s.singular_values);
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (k, &sigma) in s.singular_values.iter().enumerate() {
        if sigma <= tol || sigma == 0.0 {
            break;
        }
        out += s.u.column(k) * s.v_t.row(k);
    }
    Ok(out)
}

/// Orthonormal basis (as columns) of the column span of `m`.
pub fn orthonormal_basis(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = svd(m)?;
    let tol = cutoff(&s.singular_values).max(f64::EPSILON * 8.0 * s.singular_values.first().copied().unwrap_or(0.0));
    let r = s.singular_values.iter().filter(|&&v| v > tol && v > 0.0).count();
    Ok(s.u.columns(0, r).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svd_of_a_rank_two_projector() {
        let m = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.70310076997513327, 0.06384562470725477, 0.42494115219440687, 0.15523798057478899,
                0.06384562470725477, 0.91868664056130611, 0.00365420344401472, -0.26572895969091859,
                0.42494115219440687, 0.00365420344401472, 0.25816335824298364, 0.10453086947198251,
                0.15523798057478899, -0.26572895969091859, 0.10453086947198251, 0.12004923122057587,
            ],
        );
        let s = svd(&m).unwrap();
        assert!((s.singular_values[0] - 1.0).abs() < 1e-12 && (s.singular_values[1] - 1.0).abs() < 1e-12);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s.singular_values.clone()));
        assert!((&s.u * d * &s.v_t - &m).norm() < 1e-12);
        let b = orthonormal_basis(&m).unwrap();
        assert!((&b * b.transpose() - &m).norm() < 1e-12);
    }

    #[test]
    fn svd_rank_deficient_inputs() {
        let mut r = crate::rng::substream(3, 0);
        for trial in 0..500 {
            let (rows, cols, rank) = (2 + trial % 5, 3 + trial % 7, 1 + trial % 3);
            let l = DMatrix::from_vec(rows, rank, crate::rng::normal_vec(&mut r, rows * rank));
            let rt = DMatrix::from_vec(rank, cols, crate::rng::normal_vec(&mut r, rank * cols));
            let m = l * rt;
            let s = svd(&m).unwrap();
            let k = rows.min(cols);
            assert_eq!(s.u.shape(), (rows, k));
            assert_eq!(s.v_t.shape(), (k, cols));
            let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s.singular_values.clone()));
            assert!((&s.u * d * &s.v_t - &m).norm() < 1e-12 * (1.0 + m.norm()));
            assert!((s.u.transpose() * &s.u - DMatrix::identity(k, k)).norm() < 1e-12);
            assert!((&s.v_t * s.v_t.transpose() - DMatrix::identity(k, k)).norm() < 1e-12);
            assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
            assert_eq!(rank_of(&s.singular_values), rank.min(k));
        }
    }

    #[test]
    fn svd_of_zero_and_roundoff_columns() {
        let s = svd(&DMatrix::zeros(3, 5)).unwrap();
        assert_eq!(s.singular_values, [0.0; 3]);
        assert!((s.u.transpose() * &s.u - DMatrix::identity(3, 3)).norm() < 1e-15);
        let mut m = DMatrix::from_fn(4, 3, |i, j| (i + 2 * j) as f64);
        m.column_mut(2).fill(1e-300);
        let s = svd(&m).unwrap();
        assert!(s.singular_values[2] < 1e-290);
    }

    fn rank_of(sv: &[f64]) -> usize {
        sv.iter().filter(|&&v| v > 1e-10 * sv[0]).count()
    }

    #[test]
    fn svt_zero_threshold_is_identity() {
        let z = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 3.0, 0.1, -1.0]);
        assert_eq!(svt(&z, 0.0).unwrap(), z);
    }

    #[test]
    fn svt_diagonal() {
        let z = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let x = svt(&z, 2.0).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!((x - want).norm() < 1e-12);
    }

    #[test]
    fn norms_of_diagonal() {
        let z = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 4.0]);
        assert!((nuclear_norm(&z).unwrap() - 7.0).abs() < 1e-12);
        assert!((spectral_norm(&z).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(rank(&z, 0.0).unwrap(), 2);
    }

    #[test]
    fn negative_threshold_rejected() {
        let z = DMatrix::<f64>::identity(2, 2);
        assert!(svt(&z, -1.0).is_err());
    }
}
