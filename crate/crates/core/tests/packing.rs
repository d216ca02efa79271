use proptest::prelude::*;
use tensorreg_core::packing::{fano_delta, fano_precondition_check, hypercube_packing, verify_packing, PackingKind};
use tensorreg_core::{linalg, Error};

fn hamming(x: &[f64], y: &[f64]) -> usize {
    x.iter().zip(y).filter(|(a, b)| a != b).count()
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[test]
fn full_d12_passes_exhaustive_checks() {
    let delta = 0.7;
    let set = hypercube_packing(12, delta, PackingKind::Full, 100_000, 1).unwrap();
    assert!(set.cardinality() >= 3);
    let d2 = delta * delta;
    for i in 0..set.cardinality() {
        for j in 0..i {
            let (x, y) = (&set.elements[i], &set.elements[j]);
            assert!(hamming(x, y) >= 4);
            let v = sq_dist(x, y);
            assert!(v >= d2 / 4.0 - 1e-15 && v <= d2 + 1e-15, "{v}");
        }
    }
    let check = verify_packing(&set).unwrap();
    assert!(check.passed);
    assert!(check.min_hamming >= 4);
    assert_eq!(check.cardinality, set.cardinality());
    assert!(set.log_m_per_dim() > 0.0);
}

#[test]
fn sparse_window() {
    let delta = 2.0;
    let set = hypercube_packing(20, delta, PackingKind::Sparse { s: 4 }, 20_000, 2).unwrap();
    assert!(set.cardinality() >= 2);
    for i in 0..set.cardinality() {
        assert_eq!(set.elements[i].iter().filter(|v| **v != 0.0).count(), 4);
        for j in 0..i {
            let v = sq_dist(&set.elements[i], &set.elements[j]);
            assert!(v >= delta * delta / 8.0 - 1e-12 && v <= delta * delta + 1e-12);
        }
    }
    assert!(verify_packing(&set).unwrap().passed);
}

#[test]
fn lowrank_elements_have_rank_at_most_r() {
    let (d1, d2, r) = (4, 6, 2);
    let set = hypercube_packing(d1 * d2, 1.0, PackingKind::Lowrank { d1, d2, r }, 20_000, 3).unwrap();
    for e in &set.elements {
        let m = nalgebra::DMatrix::from_row_slice(d1, d2, e);
        assert!(linalg::rank(&m, 1e-12).unwrap() <= r);
    }
    let check = verify_packing(&set).unwrap();
    assert!(check.passed && check.max_rank <= r);
}

#[test]
fn identical_candidates_are_not_both_kept() {
    let set = hypercube_packing(6, 1.0, PackingKind::Full, 5000, 4).unwrap();
    for i in 0..set.cardinality() {
        for j in 0..i {
            assert_ne!(set.elements[i], set.elements[j]);
        }
    }
}

#[test]
fn construction_errors() {
    assert!(hypercube_packing(5, 1.0, PackingKind::Full, 100, 0).is_err());
    assert!(hypercube_packing(12, 0.0, PackingKind::Full, 100, 0).is_err());
    assert!(hypercube_packing(12, 1.0, PackingKind::Sparse { s: 13 }, 100, 0).is_err());
    assert!(hypercube_packing(12, 1.0, PackingKind::Lowrank { d1: 3, d2: 5, r: 1 }, 100, 0).is_err());
    match hypercube_packing(12, 1.0, PackingKind::Full, 1, 0) {
        Err(Error::BudgetExhausted(partial)) => assert_eq!(partial.cardinality(), 1),
        other => panic!("expected BudgetExhausted, got {other:?}"),
    }
}

#[test]
fn verifier_catches_a_tampered_set() {
    let mut set = hypercube_packing(12, 1.0, PackingKind::Full, 10_000, 5).unwrap();
    let copy = set.elements[0].clone();
    set.elements.push(copy);
    let check = verify_packing(&set).unwrap();
    assert!(!check.passed);
    assert_eq!(check.offending_pair, Some((0, set.cardinality() - 1)));
}

#[test]
fn fano_two_point_pass() {
    let mut set = hypercube_packing(12, 1.0, PackingKind::Full, 10_000, 6).unwrap();
    set.elements.truncate(2);
    let (n, c_u) = (100, 1.0);
    let delta = fano_delta(set.delta, c_u, n);
    // window [δ_p²/4, 2δ_p²] and threshold 128 n δ² = 32 δ_p² c_u² = 32 > ln 2
    let rep = fano_precondition_check(&set, n, c_u, delta).unwrap();
    assert!(rep.window_ok && !rep.cardinality_ok && !rep.passed);
    let tiny = 0.05;
    let set = hypercube_packing(12, tiny, PackingKind::Full, 10_000, 6).unwrap();
    let rep = fano_precondition_check(&set, n, c_u, fano_delta(tiny, c_u, n)).unwrap();
    assert!(rep.passed, "{rep:?}");
    assert!(rep.log_m >= rep.cardinality_threshold);
}

#[test]
fn fano_reports_the_offending_pair() {
    let set = hypercube_packing(12, 1.0, PackingKind::Full, 10_000, 7).unwrap();
    // δ ten times too large pushes every distance below the window
    let rep = fano_precondition_check(&set, 10, 1.0, 10.0 * fano_delta(1.0, 1.0, 10)).unwrap();
    assert!(!rep.window_ok && !rep.passed);
    assert_eq!(rep.offending_pair, Some((0, 1)));
    assert!(fano_precondition_check(&set, 0, 1.0, 0.1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn packings_pass_their_verifier(d in 6usize..16, delta in 0.01f64..10.0, seed in any::<u64>(), which in 0usize..3) {
        let kind = match which {
            0 => PackingKind::Full,
            1 => PackingKind::Sparse { s: 1 + (seed as usize) % d },
            _ => PackingKind::Lowrank { d1: 2, d2: d, r: 1 },
        };
        let dim = if which == 2 { 2 * d } else { d };
        match hypercube_packing(dim, delta, kind, 2000, seed) {
            Ok(set) => {
                let v = verify_packing(&set).unwrap();
                prop_assert!(v.passed, "{v:?}");
                prop_assert!(set.min_dist_sq >= set.window[0] * (1.0 - 1e-12));
                prop_assert!(set.max_dist_sq <= set.window[1] * (1.0 + 1e-12));
            }
            // only a one-element sparse support space can run dry
            Err(Error::BudgetExhausted(p)) => prop_assert!(p.cardinality() < 2),
            Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
        }
    }
}
