//! Explicit quadratic instances found by search give lower bounds that
//! sandwich the PEP value together with the closed-form guarantee.
use pepnet::algorithm::{build_extra, unroll};
use pepnet::compact::{build_compact_pep, EquivalencePartition};
use pepnet::function_class::FunctionClass;
use pepnet::matrix_class::MatrixClass;
use pepnet::metrics::{InitialCondition, Metric, PepSettings};
use pepnet::oracle::{lower_bound_search, nonprincipal_spectrum, simulate_run, theoretical_bound};
use pepnet::solver::SolverOptions;

fn main() -> pepnet::Result<()> {
    let k = 15;
    let spec = build_extra(k, 0.25)?;
    let metric = Metric::AvgFunctionGap;
    let settings = PepSettings {
        function_classes: vec![FunctionClass::smooth_strongly_convex(0.1, 1.0)?],
        matrix_classes: vec![MatrixClass::symmetric(0.5, "W")?],
        metric,
        initial: InitialCondition::standard(1.0, 1.0),
    };
    let found = lower_bound_search(&settings, &spec, &[2], 2, 2000, 0)?;
    let run = simulate_run(&found.instance, &spec)?;
    println!("search: {:.6} after {} evaluations", found.value, found.evaluations);
    println!("  its W has spectrum {:?}, error {:.6}", nonprincipal_spectrum(&found.instance.w), run.metric(&metric, &found.instance));
    let trace = unroll(&spec, &metric.common_points(&spec.output))?;
    let pep = build_compact_pep(&trace, &EquivalencePartition::finite(&[2])?, &settings)?;
    let sol = pep.solve(&SolverOptions::default().with_facial_reduction(true))?;
    println!("PEP:    {:.6}", sol.value);
    let (ef, _, tau) = theoretical_bound(k, 1.0, 0.1, 0.5, 1.0, 1.0)?;
    println!("bound:  {ef:.6} (rate 1 - {tau:.3e})");
    Ok(())
}
