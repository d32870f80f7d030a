mod common;

use nalgebra::{DMatrix, DVector};
use pepnet::expr::VectorExpr;
use pepnet::matrix_class::{
    consensus_complement, consensus_constraints, fixture_pair, nonconvexity_fixture, recover_averaging_matrix,
    simulate_mcl_consensus, ConsensusSet, MatrixClass,
};
use pepnet::oracle::{averaging_matrix, nonprincipal_spectrum};

#[test]
fn class_bounds_are_validated() {
    assert!(MatrixClass::new(-1.0, 0.5, "W").is_err());
    assert!(MatrixClass::new(0.6, 0.5, "W").is_err());
    assert_eq!(MatrixClass::new(-0.2, 0.7, "W").unwrap().spectral_radius(), 0.7);
}

#[test]
fn complement_is_orthonormal_and_orthogonal_to_ones() {
    for n in 2..7 {
        let q = consensus_complement(n);
        assert!((q.transpose() * &q - DMatrix::identity(n - 1, n - 1)).amax() < 1e-14);
        assert!((q.transpose() * DVector::from_element(n, 1.0)).amax() < 1e-14);
    }
}

#[test]
fn single_step_gives_one_by_one_lmi() {
    let set = ConsensusSet {
        symbol: "W".into(),
        pairs: vec![(VectorExpr::unit(2, 0), VectorExpr::unit(2, 1))],
    };
    let c = consensus_constraints(&set, &MatrixClass::symmetric(0.5, "W").unwrap()).unwrap();
    assert_eq!(c.lmi.dim, 1);
    assert!(c.symmetry.is_empty());
    let empty = ConsensusSet { symbol: "W".into(), pairs: vec![] };
    assert!(consensus_constraints(&empty, &MatrixClass::symmetric(0.5, "W").unwrap()).is_err());
}

#[test]
fn consensual_iterates_satisfy_the_constraints_for_any_class() {
    // x = y = 1 (x) v: every averaging matrix maps it to itself.
    let set = ConsensusSet {
        symbol: "W".into(),
        pairs: vec![(VectorExpr::unit(2, 0), VectorExpr::unit(2, 1))],
    };
    let v = DVector::from_vec(vec![0.3, -1.2]);
    let agents: Vec<common::Agent> = (0..4)
        .map(|_| common::Agent { p: DMatrix::from_columns(&[v.clone(), v.clone()]), f: DVector::zeros(0) })
        .collect();
    let c = consensus_constraints(&set, &MatrixClass::new(0.1, 0.2, "W").unwrap()).unwrap();
    assert!(common::eval_expr(&c.average.expr, &agents, &[]).abs() < 1e-15);
    assert!(common::eval_expr(c.lmi.entry(0, 0), &agents, &[]).abs() < 1e-15);
}

#[test]
fn hundred_random_averaging_steps_satisfy_the_constraints() {
    let mut r = common::rng(11);
    for i in 0..100 {
        let (avg, sym, top) = common::consensus_residuals(&mut r);
        assert!(avg <= 1e-9 && sym <= 1e-9 && top <= 1e-9, "instance {i}: {avg} {sym} {top}");
    }
}

#[test]
fn a_wrong_spectrum_violates_the_lmi() {
    // W has eigenvalue 0.9 off 1 but the class only allows [-0.5, 0.5].
    let w = averaging_matrix(&[0.9, 0.0]);
    let x = consensus_complement(3).column(0).into_owned();
    let y = &w * &x;
    assert!((&y - &x * 0.9).amax() < 1e-14);
    let set = ConsensusSet {
        symbol: "W".into(),
        pairs: vec![(VectorExpr::unit(2, 0), VectorExpr::unit(2, 1))],
    };
    let agents: Vec<common::Agent> = (0..3)
        .map(|i| common::Agent { p: DMatrix::from_row_slice(1, 2, &[x[i], y[i]]), f: DVector::zeros(0) })
        .collect();
    let c = consensus_constraints(&set, &MatrixClass::symmetric(0.5, "W").unwrap()).unwrap();
    let lmi = common::eval_expr(c.lmi.entry(0, 0), &agents, &[]);
    // (0.9 + 0.5)(0.9 - 0.5) ||x||^2 / N
    assert!((lmi - 1.4 * 0.4 / 3.0).abs() < 1e-12, "{lmi}");
    assert!(nonprincipal_spectrum(&w).iter().any(|&l| (l - 0.9).abs() < 1e-12));
}

#[test]
fn recovery_finds_the_generating_matrix() {
    let mut r = common::rng(3);
    let n = 5;
    let d = 2;
    let class = MatrixClass::new(-0.4, 0.6, "W").unwrap();
    let w = common::random_averaging(&mut r, n, -0.4, 0.6);
    let pairs: Vec<(DVector<f64>, DVector<f64>)> = (0..3)
        .map(|_| {
            let x = common::random_matrix(&mut r, n, d);
            let y = &w * &x;
            (DVector::from_row_slice(x.transpose().as_slice()), DVector::from_row_slice(y.transpose().as_slice()))
        })
        .collect();
    let fit = recover_averaging_matrix(&pairs, n, &class, 1e-6).unwrap();
    assert!(fit.feasible, "residual {}", fit.residual);
    assert!((&fit.w - &w).amax() < 1e-4);
    assert!(fit.spectrum.iter().all(|&l| (-0.4 - 1e-6..=0.6 + 1e-6).contains(&l)));
}

#[test]
fn recovery_rejects_a_changed_average() {
    let n = 3;
    let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
    let y = DVector::from_vec(vec![3.0, 3.0, 3.0]);
    let fit = recover_averaging_matrix(&[(x, y)], n, &MatrixClass::symmetric(0.5, "W").unwrap(), 1e-6).unwrap();
    assert!(!fit.feasible);
}

#[test]
fn nonconvexity_fixture_for_both_intervals() {
    for (lm, lp) in [(-0.5, 0.5), (0.0, 0.9)] {
        for n in [2, 3, 5] {
            let fx = nonconvexity_fixture(n, lm, lp).unwrap();
            let class = MatrixClass::new(lm, lp, "W").unwrap();
            let ok: Vec<bool> = [&fx.g1, &fx.g2, &fx.g3]
                .iter()
                .map(|g| recover_averaging_matrix(&[fixture_pair(g, n, 1e-9)], n, &class, 1e-6).unwrap().feasible)
                .collect();
            assert_eq!(ok, vec![true, true, false], "({lm}, {lp}) n = {n}");
        }
    }
    assert!(nonconvexity_fixture(3, 0.5, 0.5).is_err());
    assert!(nonconvexity_fixture(1, -0.5, 0.5).is_err());
}

#[test]
fn mcl_operator_drives_iterates_to_the_average() {
    let n = 4;
    let d = 2;
    let w = averaging_matrix(&[0.5, -0.3, 0.1]);
    let m = w.kronecker(&DMatrix::identity(d, d));
    let x0 = DVector::from_fn(n * d, |i, _| i as f64);
    let x = simulate_mcl_consensus(&m, n, &x0, 80).unwrap();
    for c in 0..d {
        let mean = (0..n).map(|i| x0[i * d + c]).sum::<f64>() / n as f64;
        for i in 0..n {
            assert!((x[i * d + c] - mean).abs() < 1e-12);
        }
    }
}

#[test]
fn mcl_operator_need_not_be_a_kronecker_product() {
    // Mixes coordinates off the consensus subspace; still fixes 1 (x) v.
    let n = 3;
    let d = 2;
    let q = consensus_complement(n).kronecker(&DMatrix::identity(d, d));
    let inner = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.3 } else { 0.1 });
    let m = DMatrix::identity(n * d, n * d) - &q * q.transpose() + &q * inner * q.transpose();
    let x0 = DVector::from_fn(n * d, |i, _| (i * i) as f64);
    assert!(simulate_mcl_consensus(&m, n, &x0, 5).is_ok());
}

#[test]
fn mcl_operator_is_checked() {
    let n = 3;
    let nonsym = DMatrix::from_fn(n, n, |i, j| if j == (i + 1) % n { 1.0 } else { 0.0 });
    assert!(simulate_mcl_consensus(&nonsym, n, &DVector::zeros(n), 1).is_err());
    let shifted = DMatrix::from_element(n, n, 0.5);
    assert!(simulate_mcl_consensus(&shifted, n, &DVector::zeros(n), 1).is_err());
    let identity = DMatrix::identity(n, n);
    assert!(simulate_mcl_consensus(&identity, n, &DVector::zeros(n), 1).is_err());
}
