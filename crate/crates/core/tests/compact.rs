mod common;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use pepnet::algorithm::{build_extra, unroll};
use pepnet::compact::{
    all_psd, build_compact_pep, expand_solution, psd_reformulation, psd_reformulation_gt, CompactBlocks,
    EquivalencePartition,
};
use pepnet::function_class::FunctionClass;
use pepnet::matrix_class::MatrixClass;
use pepnet::metrics::{InitialCondition, Metric, PepSettings};
use pepnet::solver::{SolveStatus, SolverOptions};
use rand::Rng;

fn scalar(x: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, x)
}

fn one_class(ga: f64, gr: f64) -> CompactBlocks {
    CompactBlocks {
        fa: vec![DVector::zeros(0)],
        ga: vec![scalar(ga)],
        gr: vec![Some(scalar(gr))],
        gc: BTreeMap::new(),
    }
}

fn settings(metric: Metric, classes: usize) -> PepSettings {
    PepSettings {
        function_classes: vec![FunctionClass::smooth_strongly_convex(0.1, 1.0).unwrap(); classes],
        matrix_classes: vec![MatrixClass::symmetric(0.5, "W").unwrap()],
        metric,
        initial: InitialCondition::standard(1.0, 1.0),
    }
}

#[test]
fn partitions_are_validated() {
    assert!(EquivalencePartition::finite(&[]).is_err());
    assert!(EquivalencePartition::finite(&[2, 0]).is_err());
    assert!(EquivalencePartition::limit(&[Some(0.5), Some(0.4)]).is_err());
    assert!(EquivalencePartition::limit(&[Some(1.2), None]).is_err());
    let p = EquivalencePartition::finite(&[1, 4]).unwrap();
    assert_eq!(p.agent_count(), Some(5));
    assert_eq!(p.kappa(0), None);
    assert_eq!(p.kappa(1), Some(1.0 / 3.0));
    assert_eq!(p.rho(1), 0.8);
    let l = EquivalencePartition::limit(&[None, Some(1.0)]).unwrap();
    assert_eq!(l.singletons(), vec![true, false]);
    assert_eq!(l.kappa(1), Some(0.0));
}

#[test]
fn two_agent_class_examples() {
    // Expanded [[a, r], [r, a]] has eigenvalues a + r and a - r.
    let p = EquivalencePartition::finite(&[2]).unwrap();
    for (ga, gr, psd) in [(1.0, -0.5, true), (1.0, 0.5, true), (1.0, -1.5, false), (1.0, 1.5, false)] {
        let b = one_class(ga, gr);
        assert_eq!(all_psd(&psd_reformulation(&p, &b), 1e-12), psd, "ga {ga} gr {gr}");
        let (_, g) = expand_solution(&p, &b).unwrap();
        assert_eq!(g, DMatrix::from_row_slice(2, 2, &[ga, gr, gr, ga]));
    }
}

#[test]
fn averaged_form_matches_for_one_class() {
    for n in 2..6 {
        for (ga, gr) in [(1.0, -0.2), (1.0, -0.3), (2.0, 1.9), (1.0, 1.1), (0.5, -0.5)] {
            let p = EquivalencePartition::finite(&[n]).unwrap();
            let b = one_class(ga, gr);
            assert_eq!(
                all_psd(&psd_reformulation(&p, &b), 1e-12),
                all_psd(&psd_reformulation_gt(n, &b.ga[0], b.gr[0].as_ref().unwrap()), 1e-12),
                "n {n} ga {ga} gr {gr}"
            );
        }
    }
}

#[test]
fn expansion_orders_agents_class_by_class() {
    let p = EquivalencePartition::finite(&[1, 2]).unwrap();
    let b = CompactBlocks {
        fa: vec![DVector::from_vec(vec![1.0]), DVector::from_vec(vec![2.0])],
        ga: vec![scalar(3.0), scalar(4.0)],
        gr: vec![None, Some(scalar(0.5))],
        gc: BTreeMap::from([((0, 1), scalar(0.25)), ((1, 0), scalar(0.25))]),
    };
    let (f, g) = expand_solution(&p, &b).unwrap();
    assert_eq!(f.as_slice(), &[1.0, 2.0, 2.0]);
    assert_eq!(g, DMatrix::from_row_slice(3, 3, &[3.0, 0.25, 0.25, 0.25, 4.0, 0.5, 0.25, 0.5, 4.0]));
    assert!(expand_solution(&EquivalencePartition::limit(&[Some(1.0)]).unwrap(), &one_class(1.0, 0.0)).is_err());
}

#[test]
fn class_mean_gram_matches_dense_averages() {
    let mut r = common::rng(5);
    for _ in 0..20 {
        let sizes = [r.gen_range(1..4), r.gen_range(1..4)];
        let p = 2;
        let part = EquivalencePartition::finite(&sizes).unwrap();
        let b = common::random_blocks(&mut r, &sizes, p);
        let (_, g) = expand_solution(&part, &b).unwrap();
        let h = b.class_mean_gram(&part);
        let start = [0, sizes[0]];
        for u in 0..2 {
            for v in 0..2 {
                let mut blk = DMatrix::<f64>::zeros(p, p);
                for i in 0..sizes[u] {
                    for j in 0..sizes[v] {
                        blk += g.view(((start[u] + i) * p, (start[v] + j) * p), (p, p));
                    }
                }
                blk /= (sizes[u] * sizes[v]) as f64;
                assert!((blk - h.view((u * p, v * p), (p, p))).amax() < 1e-12);
            }
        }
    }
}

#[test]
fn block_psd_test_matches_dense_eigendecomposition() {
    let mut r = common::rng(99);
    let (mut checked, mut psd) = (0, 0);
    while checked < 50 {
        let n = r.gen_range(1..=6);
        let u_count = r.gen_range(1..=n.min(3));
        let mut sizes = vec![1; u_count];
        for _ in u_count..n {
            let u = r.gen_range(0..u_count);
            sizes[u] += 1;
        }
        let p = r.gen_range(1..=3);
        let part = EquivalencePartition::finite(&sizes).unwrap();
        let b = common::random_blocks(&mut r, &sizes, p);
        let (blockwise, dense) = common::block_vs_dense(&part, &b);
        if dense.abs() < 1e-6 {
            continue;
        }
        assert_eq!(blockwise, dense > 0.0, "sizes {sizes:?} p {p} min eig {dense}");
        checked += 1;
        psd += usize::from(dense > 0.0);
    }
    assert!(psd > 0 && psd < checked);
}

#[test]
fn symmetric_metric_has_no_agent_count_coefficient() {
    let spec = build_extra(2, 0.25).unwrap();
    for metric in [Metric::AvgFunctionGap, Metric::AvgIterateError] {
        let trace = unroll(&spec, &metric.common_points(&spec.output)).unwrap();
        for n in [2, 3, 7] {
            let part = EquivalencePartition::for_metric(&metric, n).unwrap();
            let pep = build_compact_pep(&trace, &part, &settings(metric, 1)).unwrap();
            assert!(pep.count_usage().is_empty(), "{:?}", pep.count_usage());
        }
    }
    let metric = Metric::WorstAgentIterate;
    let trace = unroll(&spec, &metric.common_points(&spec.output)).unwrap();
    let pep = build_compact_pep(&trace, &EquivalencePartition::for_metric(&metric, 4).unwrap(), &settings(metric, 2)).unwrap();
    assert!(!pep.count_usage().is_empty());
}

#[test]
fn symmetric_metric_value_equals_its_limit() {
    let spec = build_extra(2, 0.25).unwrap();
    let metric = Metric::AvgIterateError;
    let trace = unroll(&spec, &metric.common_points(&spec.output)).unwrap();
    let opts = SolverOptions::default().with_facial_reduction(true);
    let s = settings(metric, 1);
    let finite = build_compact_pep(&trace, &EquivalencePartition::finite(&[4]).unwrap(), &s).unwrap().solve(&opts).unwrap();
    let limit = build_compact_pep(&trace, &EquivalencePartition::limit_for_metric(&metric).unwrap(), &s).unwrap().solve(&opts).unwrap();
    assert_eq!(finite.status, SolveStatus::Optimal);
    assert_eq!(limit.status, SolveStatus::Optimal);
    assert!((finite.value - limit.value).abs() < 1e-6 * finite.value.max(1.0));
}

#[test]
fn solved_blocks_expand_to_a_psd_gram() {
    let spec = build_extra(2, 0.25).unwrap();
    let metric = Metric::WorstAgentFunction;
    let trace = unroll(&spec, &metric.common_points(&spec.output)).unwrap();
    let part = EquivalencePartition::for_metric(&metric, 3).unwrap();
    let pep = build_compact_pep(&trace, &part, &settings(metric, 2)).unwrap();
    let sol = pep.solve(&SolverOptions::default().with_facial_reduction(true)).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    let (_, g) = expand_solution(&part, &sol.blocks).unwrap();
    let scale = g.amax().max(1.0);
    assert!(common::min_eig(&g) >= -1e-6 * scale);
    assert!(all_psd(&psd_reformulation(&part, &sol.blocks), 1e-6 * scale));
}
