//! Step size minimizing the worst-case function gap of EXTRA.
use pepnet::experiments::{run_experiment, ExperimentConfig, ExperimentKind};
use pepnet::solver::SolverOptions;

fn main() -> pepnet::Result<()> {
    let mut cfg = ExperimentConfig::preset(ExperimentKind::StepsizeSweep);
    cfg.k = 5;
    cfg.alpha_range = [0.1, 1.2];
    cfg.golden_iters = 10;
    let rows = run_experiment(&cfg, &SolverOptions::default())?;
    for r in &rows {
        println!("{:<6} alpha = {:.5}: {:.6e}", r.stage, r.alpha, r.pep_value);
    }
    Ok(())
}
