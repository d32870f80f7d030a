//! Averaging steps only: the spread contracts by the squared spectral radius per step.
use pepnet::algorithm::{build_consensus_only, unroll};
use pepnet::compact::{build_compact_pep, EquivalencePartition};
use pepnet::function_class::FunctionClass;
use pepnet::matrix_class::MatrixClass;
use pepnet::metrics::{InitialCondition, InitialKind, Metric, PepSettings};
use pepnet::solver::SolverOptions;

fn main() -> pepnet::Result<()> {
    let metric = Metric::ConsensusSpread;
    for (lm, lp) in [(-0.5, 0.5), (0.0, 0.9), (-0.8, 0.2)] {
        let settings = PepSettings {
            function_classes: vec![FunctionClass::smooth_strongly_convex(0.1, 1.0)?],
            matrix_classes: vec![MatrixClass::new(lm, lp, "W")?],
            metric,
            initial: vec![InitialCondition::new(InitialKind::AvgSpread2, 1.0)],
        };
        for k in 1..4 {
            let trace = unroll(&build_consensus_only(k)?, &[])?;
            let pep = build_compact_pep(&trace, &EquivalencePartition::finite(&[4])?, &settings)?;
            let sol = pep.solve(&SolverOptions::default().with_facial_reduction(true))?;
            let rho: f64 = f64::max(-lm, lp);
            println!("[{lm}, {lp}] K = {k}: {:.8} (rho^2K = {:.8})", sol.value, rho.powi(2 * k as i32));
        }
    }
    Ok(())
}
