use pepnet::algorithm::{build_consensus_only, build_dgd, build_dgd_constant, build_extra, unroll, Step, XSTAR};
use pepnet::metrics::Metric;

#[test]
fn dgd_trace_sizes() {
    for k in 1..6 {
        let t = unroll(&build_dgd_constant(k, 0.5).unwrap(), &[]).unwrap();
        // x0, g_0..g_{K-1}, y_0..y_{K-1}, gstar
        assert_eq!(t.registry.dim(), 2 * k + 2);
        assert_eq!(t.triplets.len(), k + 1);
        assert_eq!(t.consensus.len(), 1);
        assert_eq!(t.consensus[0].pairs.len(), k);
        assert_eq!(t.optimum().label, XSTAR);
        assert!(t.optimum().x.is_zero());
    }
}

#[test]
fn extra_trace_sizes() {
    for k in 1..6 {
        let t = unroll(&build_extra(k, 0.25).unwrap(), &[]).unwrap();
        assert_eq!(t.registry.dim(), 2 * k + 2);
        assert_eq!(t.triplets.len(), k + 1);
        assert_eq!(t.consensus[0].pairs.len(), k);
        assert_eq!(t.iterations, k);
    }
}

#[test]
fn extra_second_iterate_has_the_correction_term() {
    let t = unroll(&build_extra(2, 0.3).unwrap(), &[]).unwrap();
    let r = &t.registry;
    let x2 = t.point("x2").unwrap();
    let c = |name: &str| x2.coeffs()[r.vector(name).unwrap()];
    // x2 = x1 + W x1 - (W x0 + x0)/2 - a (g1 - g0), x1 = W x0 - a g0
    assert!((c("x0") + 0.5).abs() < 1e-15);
    assert!((c("wx0") - 0.5).abs() < 1e-15);
    assert!((c("wx1") - 1.0).abs() < 1e-15);
    assert!((c("g0") - 0.0).abs() < 1e-15);
    assert!((c("g1") + 0.3).abs() < 1e-15);
}

#[test]
fn consensus_only_has_no_gradients() {
    let t = unroll(&build_consensus_only(3).unwrap(), &[]).unwrap();
    assert_eq!(t.triplets.len(), 1);
    assert_eq!(t.registry.dim(), 5);
    assert_eq!(t.consensus[0].pairs.len(), 3);
}

#[test]
fn common_points_extend_the_basis() {
    let spec = build_extra(2, 0.25).unwrap();
    let t = unroll(&spec, &Metric::AvgFunctionGap.common_points(&spec.output)).unwrap();
    assert_eq!(t.registry.dim(), 2 * 2 + 2 + 2);
    assert_eq!(t.interpolation_triplets().len(), 2 + 1 + 1);
}

#[test]
fn invalid_programs_are_rejected() {
    assert!(build_dgd(&[]).is_err());
    assert!(build_dgd(&[0.5, -1.0]).is_err());
    assert!(build_extra(0, 0.25).is_err());
    assert!(build_extra(2, f64::NAN).is_err());
    let mut spec = build_dgd_constant(1, 0.5).unwrap();
    spec.steps.push(Step::Combine { output: "z".into(), terms: vec![(1.0, "nowhere".into())] });
    assert!(unroll(&spec, &[]).is_err());
    let mut spec = build_dgd_constant(1, 0.5).unwrap();
    spec.steps.push(Step::Combine { output: "x1".into(), terms: vec![] });
    assert!(unroll(&spec, &[]).is_err());
}
