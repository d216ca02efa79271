use proptest::prelude::*;
use tensorreg_core::datagen::{gen_problem, gen_truth, Design, ModelClass, ModelClassSpec};
use tensorreg_core::regularizer::SubspaceSpec;
use tensorreg_core::solver::{
    admm_matricized, empirical_norm, fista_solve, kkt_residual, lambda_rule, objective, risk_bound_predicted,
    risk_prefactor, RegressionProblem, SolveStatus, SolverConfig,
};
use tensorreg_core::spectral::HopmOptions;
use tensorreg_core::{rng, DenseTensor, RegularizerSpec};

fn gaussian(shape: &[usize], seed: u64) -> DenseTensor {
    rng::normal_tensor(&mut rng::substream(seed, 0), shape)
}

fn problem(truth: &DenseTensor, n: usize, split: usize, sigma: f64, seed: u64) -> RegressionProblem {
    gen_problem(truth, n, split, sigma, &Design::Iid, seed).unwrap()
}

/// `(1/2n) Σ_i Σ_r (Y_ir − Σ_c X_ic A_cr)²` by explicit loops.
fn naive_loss(p: &RegressionProblem, a: &DenseTensor) -> f64 {
    let dm: usize = p.covariate_shape().iter().product();
    let dr: usize = p.response_shape().iter().product();
    let (x, y, ad) = (p.covariate_data(), p.response_data(), a.data());
    let mut total = 0.0;
    for i in 0..p.n() {
        for r in 0..dr {
            let mut pred = 0.0;
            for c in 0..dm {
                pred += x[i * dm + c] * ad[c * dr + r];
            }
            let e = y[i * dr + r] - pred;
            total += e * e;
        }
    }
    total / (2.0 * p.n() as f64)
}

fn grad_at_zero(p: &RegressionProblem) -> DenseTensor {
    p.loss_gradient(&DenseTensor::zeros(&p.coefficient_shape())).unwrap()
}

#[test]
fn objective_matches_loops() {
    let truth = gaussian(&[2, 3, 2], 1);
    for split in [1, 2, 3] {
        let p = problem(&truth, 7, split, 0.3, 2);
        let a = gaussian(&[2, 3, 2], 3);
        let spec = RegularizerSpec::EntryL1;
        let want = naive_loss(&p, &a) + 0.4 * spec.eval(&a).unwrap();
        let got = objective(&p, &spec, 0.4, &a).unwrap();
        assert!((got - want).abs() < 1e-12 * want.max(1.0));
        let zero = DenseTensor::zeros(&[2, 3, 2]);
        let y2: f64 = p.response_data().iter().map(|v| v * v).sum();
        assert!((objective(&p, &spec, 0.4, &zero).unwrap() - y2 / 14.0).abs() < 1e-12);
    }
    let noiseless = problem(&truth, 5, 2, 0.0, 4);
    assert!(objective(&noiseless, &RegularizerSpec::EntryL1, 0.0, &truth).unwrap() < 1e-28);
    assert!(objective(&noiseless, &RegularizerSpec::EntryL1, 0.0, &gaussian(&[2, 3], 0)).is_err());
}

#[test]
fn empirical_norm_examples() {
    let truth = gaussian(&[2, 2, 3], 5);
    let p = problem(&truth, 4, 2, 0.1, 6);
    assert_eq!(empirical_norm(&p, &DenseTensor::zeros(&[2, 2, 3])).unwrap(), 0.0);

    // one sample, indicator covariate: the selected fiber of Δ
    let x = DenseTensor::indicator(&[2, 2], &[1, 0]);
    let single = RegressionProblem::new(vec![2, 2], vec![3], x.into_data(), vec![0.0; 3], 0.0, None).unwrap();
    let delta = gaussian(&[2, 2, 3], 7);
    let fiber: f64 = (0..3).map(|k| delta.get(&[1, 0, k]).powi(2)).sum::<f64>().sqrt();
    assert!((empirical_norm(&single, &delta).unwrap() - fiber).abs() < 1e-14);

    let big = problem(&truth, 2000, 2, 0.0, 8);
    let en = empirical_norm(&big, &delta).unwrap().powi(2);
    let f = delta.frobenius_sq();
    assert!((en / f - 1.0).abs() < 0.05, "{en} vs {f}");
}

#[test]
fn unpenalized_fit_is_least_squares() {
    let truth = gaussian(&[2, 2, 2], 9);
    let p = problem(&truth, 60, 3, 0.5, 10);
    let cfg = SolverConfig { tol: 0.0, kkt_tol: 1e-10, ..SolverConfig::default() };
    let r = fista_solve(&p, &RegularizerSpec::EntryL1, 0.0, &cfg).unwrap();
    let g = p.loss_gradient(&r.estimate).unwrap();
    assert!(g.frobenius() < 1e-8, "gradient {}", g.frobenius());
}

#[test]
fn large_lambda_gives_zero() {
    let truth = gaussian(&[3, 3, 2], 11);
    let p = problem(&truth, 40, 2, 0.2, 12);
    let g = grad_at_zero(&p);
    let h = HopmOptions::default();
    for spec in [
        RegularizerSpec::EntryL1,
        RegularizerSpec::FiberGroup { mode: 2 },
        RegularizerSpec::SliceFrob { axes: [0, 1] },
        RegularizerSpec::SliceNuclear { axes: [0, 1] },
    ] {
        let lam = spec.dual(&g, &h).unwrap() * 1.01;
        let r = fista_solve(&p, &spec, lam, &SolverConfig::default()).unwrap();
        assert!(r.estimate.is_zero(), "{spec:?}");
        assert_eq!(kkt_residual(&p, &spec, lam, &r.estimate).unwrap(), 0.0);
    }
    let lam = RegularizerSpec::MatricizedNuclearSum.dual(&g, &h).unwrap() * 1.01;
    let r = admm_matricized(&p, lam, &SolverConfig::default()).unwrap();
    assert!(r.estimate.max_abs() < 1e-6, "{}", r.estimate.max_abs());
}

#[test]
fn fista_beats_a_million_perturbations() {
    let truth = {
        let mut t = DenseTensor::zeros(&[2, 2, 2]);
        t.set(&[0, 1, 1], 1.5);
        t.set(&[1, 0, 0], -1.0);
        t
    };
    let p = problem(&truth, 12, 3, 0.3, 13);
    let spec = RegularizerSpec::EntryL1;
    let lam = 0.1;
    let cfg = SolverConfig { tol: 1e-16, kkt_tol: 1e-12, ..SolverConfig::default() };
    let r = fista_solve(&p, &spec, lam, &cfg).unwrap();
    let base = objective(&p, &spec, lam, &r.estimate).unwrap();
    let mut g = rng::substream(14, 0);
    for i in 0..1_000_000u64 {
        let scale = [1e-1, 1e-3, 1e-5][(i % 3) as usize];
        let e = rng::normal_tensor(&mut g, &[2, 2, 2]).scale(scale);
        let v = objective(&p, &spec, lam, &r.estimate.add(&e).unwrap()).unwrap();
        assert!(v >= base - 1e-12, "perturbation {i} improves: {v} < {base}");
    }
}

#[test]
fn trace_and_final_objective() {
    let spec_class = ModelClassSpec::new(ModelClass::Theta1 { s: 4 }, &[4, 4, 4]);
    let truth = gen_truth(&spec_class, 15).unwrap();
    let p = problem(&truth, 150, 3, 0.5, 16);
    let spec = RegularizerSpec::EntryL1;
    let lam = 0.08;
    let r = fista_solve(&p, &spec, lam, &SolverConfig::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Converged);
    for w in r.objective_trace.windows(2).skip(1) {
        assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
    }
    let fin = objective(&p, &spec, lam, &r.estimate).unwrap();
    assert!(fin <= objective(&p, &spec, lam, &DenseTensor::zeros(&[4, 4, 4])).unwrap());
    assert!(fin <= objective(&p, &spec, lam, &truth).unwrap());
}

#[test]
fn admm_without_penalty_matches_fista() {
    let truth = gaussian(&[2, 3, 2], 17);
    let p = problem(&truth, 40, 3, 0.3, 18);
    let tight = SolverConfig { tol: 0.0, kkt_tol: 1e-11, admm_tol: 1e-10, max_iters: 50_000, ..SolverConfig::default() };
    let f = fista_solve(&p, &RegularizerSpec::EntryL1, 0.0, &tight).unwrap();
    let a = admm_matricized(&p, 0.0, &tight).unwrap();
    let d = a.estimate.sub(&f.estimate).unwrap().frobenius();
    assert!(d < 1e-6, "{d}");
}

#[test]
fn admm_matches_fista_with_two_trivial_modes() {
    // on (d, 1, 1) every unfolding has nuclear norm ‖A‖_F, the fiber norm along mode 0
    let truth = gaussian(&[6, 1, 1], 19);
    let p = problem(&truth, 30, 3, 0.5, 20);
    let tight = SolverConfig { kkt_tol: 1e-11, tol: 0.0, admm_tol: 1e-10, max_iters: 100_000, ..SolverConfig::default() };
    let lam = 0.2;
    let f = fista_solve(&p, &RegularizerSpec::FiberGroup { mode: 0 }, lam, &tight).unwrap();
    let a = admm_matricized(&p, lam, &tight).unwrap();
    assert!(!f.estimate.is_zero());
    let d = a.estimate.sub(&f.estimate).unwrap().frobenius();
    assert!(d < 1e-5, "{d}");
}

#[test]
fn admm_recovers_low_tucker_rank() {
    let class = ModelClassSpec::new(ModelClass::Theta5 { r: 1 }, &[6, 6, 6]);
    let truth = gen_truth(&class, 21).unwrap();
    let p = problem(&truth, 300, 3, 0.1, 22);
    let spec = RegularizerSpec::MatricizedNuclearSum;
    // a tenth of the level above which the estimate is zero
    let lam = 0.1 * spec.dual(&grad_at_zero(&p), &HopmOptions::default()).unwrap();
    let r = admm_matricized(&p, lam, &SolverConfig::default()).unwrap();
    let err = r.estimate.sub(&truth).unwrap().frobenius_sq();
    assert!(err < 0.5 * truth.frobenius_sq(), "error {err} vs {}", truth.frobenius_sq());
}

#[test]
fn kkt_on_one_dimensional_lasso() {
    let x = vec![0.5, -1.0, 2.0, 1.5, -0.3];
    let y = vec![1.0, -0.5, 3.0, 2.0, 0.1];
    let n = x.len() as f64;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| a * a).sum::<f64>() / n;
    let p = RegressionProblem::new(vec![1], vec![], x, y, 0.0, None).unwrap();
    let spec = RegularizerSpec::EntryL1;
    for lam in [0.1, 0.5, 1.0, 2.0] {
        let a = (sxy.abs() - lam).max(0.0) * sxy.signum() / sxx;
        let t = DenseTensor::new(vec![1], vec![a]).unwrap();
        assert!(kkt_residual(&p, &spec, lam, &t).unwrap() < 1e-12, "lambda {lam}");
        let off = DenseTensor::new(vec![1], vec![a + 0.1]).unwrap();
        assert!(kkt_residual(&p, &spec, lam, &off).unwrap() > 0.0);
    }
}

#[test]
fn kkt_is_positive_away_from_optimum() {
    let truth = gaussian(&[2, 2, 2], 24);
    let p = problem(&truth, 20, 2, 0.1, 25);
    for seed in 0..20 {
        let a = gaussian(&[2, 2, 2], 100 + seed);
        assert!(kkt_residual(&p, &RegularizerSpec::SliceNuclear { axes: [0, 2] }, 0.1, &a).unwrap() > 0.0);
    }
}

#[test]
fn theory_examples() {
    let a = lambda_rule(2.0, 100, 1.0, 1.0, 1.0).unwrap();
    let b = lambda_rule(2.0, 400, 1.0, 1.0, 1.0).unwrap();
    assert!((a / b - 2.0).abs() < 1e-14);
    assert!((risk_prefactor(0.5) - 18.0 / 7.0).abs() < 1e-15);
    assert!((risk_prefactor(1.0) - 3.0).abs() < 1e-15);
    let sub = SubspaceSpec::SupportEntries { shape: [2, 2, 2], indices: vec![[1, 1, 1]] };
    let r1 = risk_bound_predicted(&RegularizerSpec::EntryL1, &sub, 0.3, 1.0, 1.0).unwrap();
    let r2 = risk_bound_predicted(&RegularizerSpec::EntryL1, &sub, 0.6, 1.0, 1.0).unwrap();
    assert!((r2 / r1 - 4.0).abs() < 1e-12);
    assert!(risk_bound_predicted(&RegularizerSpec::EntryL1, &sub, 0.3, 0.5, 1.0).is_err());
    assert!(risk_bound_predicted(&RegularizerSpec::SliceFrob { axes: [0, 1] }, &sub, 0.3, 1.0, 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fista_certifies_its_answer(seed in any::<u64>(), lam in 0.01f64..0.5, which in 0usize..4) {
        let spec = [
            RegularizerSpec::EntryL1,
            RegularizerSpec::FiberGroup { mode: 1 },
            RegularizerSpec::SliceFrob { axes: [1, 2] },
            RegularizerSpec::SliceNuclear { axes: [0, 1] },
        ][which];
        let truth = gaussian(&[3, 2, 3], seed);
        let p = problem(&truth, 25, 2, 0.3, seed ^ 5);
        let r = fista_solve(&p, &spec, lam, &SolverConfig { tol: 0.0, kkt_tol: 1e-9, ..SolverConfig::default() }).unwrap();
        prop_assert_eq!(r.status, SolveStatus::Converged);
        prop_assert!(r.kkt_residual < 1e-9, "{}", r.kkt_residual);
        let zero = DenseTensor::zeros(&[3, 2, 3]);
        prop_assert!(objective(&p, &spec, lam, &r.estimate).unwrap() <= objective(&p, &spec, lam, &zero).unwrap());
    }
}
