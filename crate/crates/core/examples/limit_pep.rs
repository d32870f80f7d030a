//! Percentile worst case for growing N and in the many-agent limit.
use pepnet::algorithm::{build_extra, unroll};
use pepnet::compact::{build_compact_pep, EquivalencePartition};
use pepnet::function_class::FunctionClass;
use pepnet::matrix_class::MatrixClass;
use pepnet::metrics::{InitialCondition, Metric, PepSettings};
use pepnet::solver::SolverOptions;

fn main() -> pepnet::Result<()> {
    let spec = build_extra(5, 0.78)?;
    let metric = Metric::Percentile(80.0);
    let trace = unroll(&spec, &metric.common_points(&spec.output))?;
    let opts = SolverOptions::default().with_facial_reduction(true);
    let solve = |part: EquivalencePartition| -> pepnet::Result<f64> {
        let settings = PepSettings {
            function_classes: vec![FunctionClass::smooth_strongly_convex(0.1, 1.0)?; part.class_count()],
            matrix_classes: vec![MatrixClass::symmetric(0.5, "W")?],
            metric,
            initial: InitialCondition::standard(1.0, 1.0),
        };
        Ok(build_compact_pep(&trace, &part, &settings)?.solve(&opts)?.value)
    };
    for n in [5, 10, 25, 100] {
        println!("N = {n:>3}: {:.8}", solve(EquivalencePartition::for_metric(&metric, n)?)?);
    }
    println!("N = inf: {:.8}", solve(EquivalencePartition::limit_for_metric(&metric)?)?);
    Ok(())
}
