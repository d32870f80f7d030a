//! Solves the agent-dependent PEP, factors the Gram matrix into explicit
//! worst-case iterates and checks them: interpolation slacks, a concrete
//! averaging matrix, and symmetry between agents.
use pepnet::agent::{build_agent_pep, verify_certificate, ConsensusMode};
use pepnet::algorithm::{build_extra, unroll};
use pepnet::function_class::FunctionClass;
use pepnet::matrix_class::MatrixClass;
use pepnet::metrics::{InitialCondition, Metric, PepSettings};
use pepnet::solver::SolverOptions;

fn main() -> pepnet::Result<()> {
    let spec = build_extra(3, 0.25)?;
    let metric = Metric::AvgIterateError;
    let trace = unroll(&spec, &metric.common_points(&spec.output))?;
    let settings = PepSettings {
        function_classes: vec![FunctionClass::smooth_strongly_convex(0.1, 1.0)?],
        matrix_classes: vec![MatrixClass::symmetric(0.5, "W")?],
        metric,
        initial: InitialCondition::standard(1.0, 1.0),
    };
    let pep = build_agent_pep(&trace, &[3], &settings, &ConsensusMode::Relaxed)?;
    let opts = SolverOptions::default().with_facial_reduction(true);
    let cert = pep.solve(&opts, true)?;
    println!("worst case {:.8} ({}), realized in dimension {}", cert.value, cert.status.as_str(), cert.dimension);
    let report = verify_certificate(&cert, &pep, &trace, &settings, 1e-4)?;
    println!("smallest interpolation slack {:.2e}", report.interpolation_min_slack);
    for (symbol, fit) in &report.averaging {
        println!("{symbol}: fit residual {:.2e}, spectrum {:?}, tight {}", fit.residual, fit.spectrum, fit.feasible);
    }
    println!("Procrustes residual {:.2e}, value spread {:.2e}", report.procrustes_residual, report.value_spread);
    Ok(())
}
