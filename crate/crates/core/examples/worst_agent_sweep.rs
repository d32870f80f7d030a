//! Worst-agent error against N and its fitted log-log slope.
use pepnet::experiments::{fit_log_slope, run_experiment, ExperimentConfig, ExperimentKind};
use pepnet::solver::SolverOptions;

fn main() -> pepnet::Result<()> {
    let mut cfg = ExperimentConfig::preset(ExperimentKind::NSweep);
    cfg.k = 5;
    cfg.metric = "e_x_worst".into();
    let rows = run_experiment(&cfg, &SolverOptions::default())?;
    for r in &rows {
        println!("N = {:>2}: {:.8} ({})", r.n, r.pep_value, r.solver_status);
    }
    println!("slope {:.3}", fit_log_slope(&rows, "n", "pep_value")?);
    Ok(())
}
