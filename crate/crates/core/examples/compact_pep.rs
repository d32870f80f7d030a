//! Worst-case average function gap of EXTRA through the compact PEP, for a
//! few network sizes. The value does not depend on N.
use pepnet::algorithm::{build_extra, unroll};
use pepnet::compact::{build_compact_pep, EquivalencePartition};
use pepnet::function_class::FunctionClass;
use pepnet::matrix_class::MatrixClass;
use pepnet::metrics::{InitialCondition, Metric, PepSettings};
use pepnet::solver::SolverOptions;

fn main() -> pepnet::Result<()> {
    let spec = build_extra(5, 0.25)?;
    let metric = Metric::AvgFunctionGap;
    let trace = unroll(&spec, &metric.common_points(&spec.output))?;
    let settings = PepSettings {
        function_classes: vec![FunctionClass::smooth_strongly_convex(0.1, 1.0)?],
        matrix_classes: vec![MatrixClass::symmetric(0.5, "W")?],
        metric,
        initial: InitialCondition::standard(1.0, 1.0),
    };
    let opts = SolverOptions::default().with_facial_reduction(true);
    for n in [2, 5, 50] {
        let pep = build_compact_pep(&trace, &EquivalencePartition::finite(&[n])?, &settings)?;
        let sol = pep.solve(&opts)?;
        println!("N = {n:>3}: E_f <= {:.8} ({})", sol.value, sol.status.as_str());
    }
    Ok(())
}
