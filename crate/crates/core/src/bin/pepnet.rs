use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pepnet::experiments::{all_optimal, run_experiment, write_csv, ExperimentConfig, ExperimentKind};
use pepnet::solver::SolverOptions;

#[derive(Parser)]
#[command(name = "pepnet", version, about = "Worst-case certificates for decentralized optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Runs an experiment and writes one CSV row per grid point.
    Run {
        /// JSON experiment configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the configured experiment, or selects a preset without `--config`.
        #[arg(long)]
        experiment: Option<String>,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Feasibility and gap tolerance; also read from PEPNET_SOLVER_TOL.
        #[arg(long)]
        solver_tol: Option<f64>,
        /// Prints solver iterations to stderr.
        #[arg(long)]
        verbose: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> pepnet::Result<bool> {
    let Command::Run { config, experiment, out, seed, solver_tol, verbose } = cli.command;
    let kind = experiment.as_deref().map(ExperimentKind::parse).transpose()?;
    let mut cfg = match (&config, kind) {
        (Some(path), _) => ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?,
        (None, Some(k)) => ExperimentConfig::preset(k),
        (None, None) => {
            return Err(pepnet::PepError::InvalidConfig("give --config or --experiment".into()));
        }
    };
    if let Some(k) = kind {
        cfg.experiment = k;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if solver_tol.is_some() {
        cfg.solver_tol = solver_tol;
    }
    let out = out.or_else(|| cfg.output.clone().map(PathBuf::from));
    let mut opts = SolverOptions::default();
    opts.verbose = verbose;
    let rows = run_experiment(&cfg, &opts)?;
    match out {
        Some(path) => write_csv(&rows, BufWriter::new(File::create(path)?))?,
        None => write_csv(&rows, std::io::stdout().lock())?,
    }
    Ok(all_optimal(&rows))
}
