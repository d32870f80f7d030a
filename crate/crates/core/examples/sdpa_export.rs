//! Lowers a PEP to a standard-form conic program and writes it in SDPA
//! sparse format, then reads it back.
use pepnet::algorithm::{build_dgd_constant, unroll};
use pepnet::compact::{build_compact_pep, EquivalencePartition};
use pepnet::function_class::FunctionClass;
use pepnet::matrix_class::MatrixClass;
use pepnet::metrics::{InitialCondition, Metric, PepSettings};
use pepnet::solver::lower;
use pepnet::solver::sdpa::{parse_sdpa, to_sdpa_string};

fn main() -> pepnet::Result<()> {
    let spec = build_dgd_constant(2, 1.0)?;
    let metric = Metric::AvgIterateError;
    let trace = unroll(&spec, &metric.common_points(&spec.output))?;
    let settings = PepSettings {
        function_classes: vec![FunctionClass::smooth_strongly_convex(0.1, 1.0)?],
        matrix_classes: vec![MatrixClass::symmetric(0.5, "W")?],
        metric,
        initial: InitialCondition::standard(1.0, 1.0),
    };
    let pep = build_compact_pep(&trace, &EquivalencePartition::finite(&[3])?, &settings)?;
    println!("{}", pep.problem.summary());
    let lowered = lower(&pep.problem)?;
    let text = to_sdpa_string(&lowered.program);
    for line in text.lines().take(12) {
        println!("{line}");
    }
    println!("... {} lines", text.lines().count());
    let back = parse_sdpa(&text)?;
    println!("read back {} constraints, PSD blocks {:?}", back.rows.len(), back.psd_dims());
    Ok(())
}
