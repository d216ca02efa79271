//! The quadratic loss `(1/2n) ‖Y − X W‖_F²` over a flat coefficient `W`
//! of shape `D_M x D_R` (row-major, matching the coefficient tensor layout).

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::math;
use crate::tensor;

struct Gram {
    /// `XᵀX / n`
    s: DMatrix<f64>,
    /// `(XᵀY / n)ᵀ`, shape `D_R x D_M`
    ct: DMatrix<f64>,
    /// `‖Y‖² / 2n`
    c0: f64,
}

pub struct SmoothPart<'a> {
    n: usize,
    dm: usize,
    dr: usize,
    x: &'a [f64],
    y: &'a [f64],
    gram: Option<Gram>,
}

impl<'a> SmoothPart<'a> {
    /// `x` holds `n` rows of length `dm`, `y` holds `n` rows of length `dr`.
    /// With `use_gram` the sufficient statistics are formed once.
    pub fn new(x: &'a [f64], y: &'a [f64], dm: usize, dr: usize, use_gram: bool) -> Self {
        let n = x.len() / dm;
        let gram = use_gram.then(|| {
            // column-major views: X as dm x n is Xᵀ, Y as dr x n is Yᵀ
            let xt = DMatrix::from_column_slice(dm, n, x);
            let yt = DMatrix::from_column_slice(dr, n, y);
            let inv = 1.0 / n as f64;
            let s = (&xt * xt.transpose()) * inv;
            let ct = (&yt * xt.transpose()) * inv;
            let c0 = y.iter().map(|v| v * v).sum::<f64>() * inv / 2.0;
            Gram { s, ct, c0 }
        });
        Self { n, dm, dr, x, y, gram }
    }

    pub fn from_problem(problem: &'a super::RegressionProblem, gram_limit: usize) -> Self {
        let dm = problem.covariate_dim();
        Self::new(problem.covariate_data(), problem.response_data(), dm, problem.response_dim(), dm <= gram_limit)
    }

    pub fn len(&self) -> usize {
        self.dm * self.dr
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub(crate) fn gram(&self) -> Option<(&DMatrix<f64>, &DMatrix<f64>)> {
        self.gram.as_ref().map(|g| (&g.s, &g.ct))
    }

    /// Loss value and gradient at `w`.
    pub fn value_grad(&self, w: &[f64]) -> (f64, Vec<f64>) {
        match &self.gram {
            Some(g) => {
                let wt = DMatrix::from_column_slice(self.dr, self.dm, w);
                let ws = &wt * &g.s;
                let quad = tensor::dot(ws.as_slice(), w);
                let lin = tensor::dot(g.ct.as_slice(), w);
                let grad = ws - &g.ct;
                ((0.5 * quad - lin + g.c0).max(0.0), grad.as_slice().to_vec())
            }
            None => {
                let mut grad = vec![0.0; w.len()];
                let mut total = 0.0;
                for i in 0..self.n {
                    let xi = &self.x[i * self.dm..(i + 1) * self.dm];
                    let yi = &self.y[i * self.dr..(i + 1) * self.dr];
                    let pred = tensor::contract_prefix(xi, w, self.dr);
                    let resid: Vec<f64> = pred.iter().zip(yi).map(|(p, y)| p - y).collect();
                    total += tensor::dot(&resid, &resid);
                    for (j, &xv) in xi.iter().enumerate() {
                        if xv != 0.0 {
                            for (g, r) in grad[j * self.dr..(j + 1) * self.dr].iter_mut().zip(&resid) {
                                *g += xv * r;
                            }
                        }
                    }
                }
                let inv = 1.0 / self.n as f64;
                grad.iter_mut().for_each(|g| *g *= inv);
                (total * inv / 2.0, grad)
            }
        }
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        match &self.gram {
            Some(g) => {
                let wt = DMatrix::from_column_slice(self.dr, self.dm, w);
                let ws = &wt * &g.s;
                (0.5 * tensor::dot(ws.as_slice(), w) - tensor::dot(g.ct.as_slice(), w) + g.c0).max(0.0)
            }
            None => {
                let mut total = 0.0;
                for i in 0..self.n {
                    let xi = &self.x[i * self.dm..(i + 1) * self.dm];
                    let yi = &self.y[i * self.dr..(i + 1) * self.dr];
                    let pred = tensor::contract_prefix(xi, w, self.dr);
                    total += pred.iter().zip(yi).map(|(p, y)| (p - y) * (p - y)).sum::<f64>();
                }
                total / (2.0 * self.n as f64)
            }
        }
    }

    /// `½ ⟨d, ∇²f d⟩ = ‖X d‖² / 2n`, formed directly so it carries no
    /// cancellation against `‖Y‖²`.
    pub fn curvature(&self, d: &[f64]) -> f64 {
        match &self.gram {
            Some(g) => {
                let dt = DMatrix::from_column_slice(self.dr, self.dm, d);
                0.5 * tensor::dot((&dt * &g.s).as_slice(), d)
            }
            None => {
                let mut total = 0.0;
                for i in 0..self.n {
                    let xi = &self.x[i * self.dm..(i + 1) * self.dm];
                    let pred = tensor::contract_prefix(xi, d, self.dr);
                    total += tensor::dot(&pred, &pred);
                }
                total / (2.0 * self.n as f64)
            }
        }
    }

    /// Largest eigenvalue of `XᵀX / n` from a few power iterations; an
    /// underestimate that backtracking corrects.
    pub fn lipschitz_estimate(&self, iters: usize) -> f64 {
        let mut v = vec![1.0 / math::sqrt(self.dm as f64); self.dm];
        let mut est = 0.0;
        for _ in 0..iters {
            let w = match &self.gram {
                Some(g) => {
                    let out = &g.s * nalgebra::DVector::from_column_slice(&v);
                    out.as_slice().to_vec()
                }
                None => {
                    let mut out = vec![0.0; self.dm];
                    for i in 0..self.n {
                        let xi = &self.x[i * self.dm..(i + 1) * self.dm];
                        let t = tensor::dot(xi, &v);
                        for (o, x) in out.iter_mut().zip(xi) {
                            *o += t * x;
                        }
                    }
                    out.iter_mut().for_each(|o| *o /= self.n as f64);
                    out
                }
            };
            let norm = math::sqrt(tensor::dot(&w, &w));
            if norm == 0.0 {
                break;
            }
            est = norm;
            v = w.into_iter().map(|x| x / norm).collect();
        }
        est.max(1e-12)
    }
}
