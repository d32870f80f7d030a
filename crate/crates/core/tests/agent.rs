use nalgebra::DMatrix;
use pepnet::agent::{build_agent_pep, procrustes_residual, verify_certificate, ConsensusMode};
use pepnet::algorithm::{build_consensus_only, build_extra, unroll, AlgorithmSpec};
use pepnet::compact::{build_compact_pep, EquivalencePartition};
use pepnet::function_class::FunctionClass;
use pepnet::matrix_class::MatrixClass;
use pepnet::metrics::{InitialCondition, InitialKind, Metric, PepSettings};
use pepnet::oracle::averaging_matrix;
use pepnet::solver::{SolveStatus, SolverOptions};

fn opts() -> SolverOptions {
    SolverOptions::default().with_facial_reduction(true)
}

fn settings(metric: Metric, classes: usize) -> PepSettings {
    PepSettings {
        function_classes: vec![FunctionClass::smooth_strongly_convex(0.1, 1.0).unwrap(); classes],
        matrix_classes: vec![MatrixClass::symmetric(0.5, "W").unwrap()],
        metric,
        initial: InitialCondition::standard(1.0, 1.0),
    }
}

fn consensus_value(k: usize, n: usize, mode: &ConsensusMode) -> f64 {
    let spec = build_consensus_only(k).unwrap();
    let metric = Metric::ConsensusSpread;
    let trace = unroll(&spec, &[]).unwrap();
    let mut s = settings(metric, 1);
    s.initial = vec![InitialCondition::new(InitialKind::AvgSpread2, 1.0)];
    let cert = build_agent_pep(&trace, &[n], &s, mode).unwrap().solve(&opts(), false).unwrap();
    assert_eq!(cert.status, SolveStatus::Optimal);
    cert.value
}

#[test]
fn pure_consensus_contracts_by_the_spectral_radius() {
    assert!((consensus_value(1, 3, &ConsensusMode::Relaxed) - 0.25).abs() < 1e-6);
    assert!((consensus_value(2, 3, &ConsensusMode::Relaxed) - 0.0625).abs() < 1e-6);
}

#[test]
fn known_matrix_fixes_the_contraction() {
    let w = averaging_matrix(&[0.5, -0.5]);
    assert!((consensus_value(1, 3, &ConsensusMode::Known(w)) - 0.25).abs() < 1e-6);
    let exact = averaging_matrix(&[0.0, 0.0]);
    assert!(consensus_value(1, 3, &ConsensusMode::Known(exact)).abs() < 1e-6);
    let wrong = DMatrix::identity(4, 4);
    let spec = build_consensus_only(1).unwrap();
    let trace = unroll(&spec, &[]).unwrap();
    assert!(build_agent_pep(&trace, &[3], &settings(Metric::ConsensusSpread, 1), &ConsensusMode::Known(wrong)).is_err());
}

fn extra(k: usize) -> AlgorithmSpec {
    build_extra(k, 0.25).unwrap()
}

#[test]
fn certificate_checks_out() {
    let spec = extra(2);
    let metric = Metric::AvgFunctionGap;
    let trace = unroll(&spec, &metric.common_points(&spec.output)).unwrap();
    let s = settings(metric, 1);
    let pep = build_agent_pep(&trace, &[2], &s, &ConsensusMode::Relaxed).unwrap();
    let cert = pep.solve(&opts(), false).unwrap();
    assert_eq!(cert.status, SolveStatus::Optimal);
    assert!(cert.factor_residual < 1e-6, "{}", cert.factor_residual);
    let rep = verify_certificate(&cert, &pep, &trace, &s, 1e-3).unwrap();
    assert!(rep.interpolation_min_slack > -1e-6, "{}", rep.interpolation_min_slack);
    assert_eq!(rep.averaging.len(), 1);
}

#[test]
fn agent_and_compact_agree_for_a_worst_agent() {
    let spec = extra(2);
    let metric = Metric::WorstAgentIterate;
    let trace = unroll(&spec, &metric.common_points(&spec.output)).unwrap();
    let s = settings(metric, 2);
    let agent = build_agent_pep(&trace, &[1, 2], &s, &ConsensusMode::Relaxed).unwrap().solve(&opts(), false).unwrap();
    let part = EquivalencePartition::finite(&[1, 2]).unwrap();
    let compact = build_compact_pep(&trace, &part, &s).unwrap().solve(&opts()).unwrap();
    assert!((agent.value - compact.value).abs() < 1e-5 * agent.value.max(1.0), "{} {}", agent.value, compact.value);
}

#[test]
fn symmetrized_blocks_are_rotations_of_each_other() {
    let spec = extra(2);
    let metric = Metric::AvgIterateError;
    let trace = unroll(&spec, &metric.common_points(&spec.output)).unwrap();
    let s = settings(metric, 1);
    let pep = build_agent_pep(&trace, &[3], &s, &ConsensusMode::Relaxed).unwrap();
    let cert = pep.solve(&opts(), true).unwrap();
    assert!(cert.symmetrized);
    let rep = verify_certificate(&cert, &pep, &trace, &s, 1e-3).unwrap();
    assert!(rep.procrustes_residual <= 1e-5);
    assert!(rep.value_spread <= 1e-8);
}

#[test]
fn procrustes_of_a_rotation_is_zero() {
    let b = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, -1.0, 0.5, 3.0]);
    let (c, s) = (0.3f64.cos(), 0.3f64.sin());
    let q = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
    assert!(procrustes_residual(&(&q * &b), &b) < 1e-12);
    assert!(procrustes_residual(&(&b * 2.0), &b) > 1.0);
}
