//! Two classes of agents with different condition numbers: the worst case
//! depends on the share theta of ill-conditioned agents only.
use pepnet::experiments::{run_experiment, ExperimentConfig, ExperimentKind};
use pepnet::solver::SolverOptions;

fn main() -> pepnet::Result<()> {
    let mut cfg = ExperimentConfig::preset(ExperimentKind::Heterogeneity);
    cfg.k = 5;
    cfg.n_grid = vec![5, 10];
    let rows = run_experiment(&cfg, &SolverOptions::default())?;
    let (w0, w1) = (rows[0].pep_value, rows[5].pep_value);
    for r in &rows {
        let theta = r.theta.unwrap_or(0.0);
        let geometric = w1.powf(theta) * w0.powf(1.0 - theta);
        println!("N = {:>2} theta = {theta:.1}: {:.6} (geometric mean {:.6})", r.n, r.pep_value, geometric);
    }
    Ok(())
}
