use std::process::Command;

use pepnet::experiments::{all_optimal, run_experiment, write_csv, ExperimentConfig, ExperimentKind};
use pepnet::solver::SolverOptions;

const SMALL: &str = r#"{
  "experiment": "n_sweep",
  "algorithm": "extra",
  "k": 3,
  "metric": "e_f",
  "alpha": 0.25,
  "n_grid": [2, 4, 8]
}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pepnet"))
}

#[test]
fn sweep_yields_one_row_per_n() {
    let cfg = ExperimentConfig::from_json(SMALL).unwrap();
    let rows = run_experiment(&cfg, &SolverOptions::default()).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(all_optimal(&rows));
    assert_eq!(rows.iter().map(|r| r.n.as_str()).collect::<Vec<_>>(), vec!["2", "4", "8"]);
    // Scale-invariant metric: the same value for every N.
    for r in &rows {
        assert!((r.pep_value - rows[0].pep_value).abs() < 1e-6 * rows[0].pep_value);
        assert!(r.theoretical_upper.unwrap() > r.pep_value);
    }
}

#[test]
fn csv_is_byte_identical_across_runs() {
    let cfg = ExperimentConfig::from_json(SMALL).unwrap();
    let render = || {
        let rows = run_experiment(&cfg, &SolverOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        buf
    };
    let a = render();
    assert_eq!(a, render());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("experiment,algorithm,k,metric,n,theta,alpha,stage,pep_value,"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn config_rejects_unknown_keys_and_bad_values() {
    assert!(ExperimentConfig::from_json(r#"{"experiment": "n_sweep", "kk": 3}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"experiment": "n_sweep", "metric": "e_q"}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"experiment": "n_sweep", "lam_minus": 0.6, "lam_plus": 0.5}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"experiment": "bogus"}"#).is_err());
    for kind in ["n_sweep", "percentile_curve", "heterogeneity", "stepsize_sweep", "equivalence_check", "limit_check"] {
        let k = ExperimentKind::parse(kind).unwrap();
        assert_eq!(k.as_str(), kind);
        ExperimentConfig::preset(k).validate().unwrap();
    }
}

#[test]
fn binary_writes_csv_and_exits_zero_when_optimal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.json");
    std::fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("out.csv");
    let status = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",optimal,")));

    // Same run through stdout, with the tolerance from the environment.
    let o = bin().args(["run", "--config"]).arg(&cfg).env("PEPNET_SOLVER_TOL", "1e-6").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let loose = String::from_utf8(o.stdout).unwrap();
    assert_eq!(loose.lines().count(), 4);
    let value = |t: &str| -> f64 { t.lines().nth(1).unwrap().split(',').nth(8).unwrap().parse().unwrap() };
    assert!((value(&loose) - value(&text)).abs() < 1e-4);
}

#[test]
fn binary_reports_errors_with_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"experiment": "n_sweep", "unknown_key": 1}"#).unwrap();
    assert_eq!(bin().args(["run", "--config"]).arg(&cfg).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().arg("run").output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["run", "--experiment", "nope"]).output().unwrap().status.code(), Some(2));
}

#[test]
fn seed_and_experiment_flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"experiment": "n_sweep", "k": 2, "alpha": 0.25, "n_grid": [2, 3], "metric": "e_f", "oracle_budget": 20}"#,
    )
    .unwrap();
    let run = |seed: &str| {
        let o = bin().args(["run", "--config"]).arg(&cfg).args(["--experiment", "limit_check", "--seed", seed]).output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    let a = run("1");
    assert!(a.lines().nth(1).unwrap().starts_with("limit_check,"));
    assert_eq!(a.lines().last().unwrap().split(',').nth(4), Some("inf"));
    assert_eq!(a, run("1"));
}
