//! Batch experiments: JSON configuration in, one CSV row per grid point out.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::agent::{build_agent_pep, ConsensusMode};
use crate::algorithm::{build_consensus_only, build_dgd_constant, build_extra, unroll, AlgorithmSpec, AlgorithmTrace};
use crate::compact::{build_compact_pep, EquivalencePartition};
use crate::error::{PepError, Result};
use crate::function_class::FunctionClass;
use crate::matrix_class::MatrixClass;
use crate::metrics::{InitialCondition, InitialKind, Metric, PepSettings};
use crate::oracle::{lower_bound_search, theoretical_bound};
use crate::solver::{SolveStatus, SolverOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// One compact PEP per agent count.
    NSweep,
    /// A percentile metric over agent counts, closed by the many-agent limit.
    PercentileCurve,
    /// Two function classes mixed in proportion `theta` and `1 - theta`.
    Heterogeneity,
    /// Grid plus golden-section search of the step size minimizing the PEP value.
    StepsizeSweep,
    /// Compact against agent-dependent values.
    EquivalenceCheck,
    /// Finite agent counts against the many-agent limit.
    LimitCheck,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::NSweep => "n_sweep",
            ExperimentKind::PercentileCurve => "percentile_curve",
            ExperimentKind::Heterogeneity => "heterogeneity",
            ExperimentKind::StepsizeSweep => "stepsize_sweep",
            ExperimentKind::EquivalenceCheck => "equivalence_check",
            ExperimentKind::LimitCheck => "limit_check",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| PepError::InvalidConfig(format!("unknown experiment `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    #[default]
    Extra,
    Dgd,
    ConsensusOnly,
}

impl AlgorithmKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AlgorithmKind::Extra => "extra",
            AlgorithmKind::Dgd => "dgd",
            AlgorithmKind::ConsensusOnly => "consensus_only",
        }
    }
}

/// Function-class parameters of one equivalence class; give `mu` or `kappa = l / mu`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassConfig {
    #[serde(default = "one")]
    pub l: f64,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub kappa: Option<f64>,
}

impl ClassConfig {
    pub fn function_class(&self) -> Result<FunctionClass> {
        let mu = match (self.mu, self.kappa) {
            (Some(mu), None) => mu,
            (None, Some(k)) if k >= 1.0 => self.l / k,
            (None, Some(k)) => return Err(PepError::InvalidConfig(format!("kappa {k} below 1"))),
            _ => return Err(PepError::InvalidConfig("give exactly one of `mu` and `kappa`".into())),
        };
        FunctionClass::smooth_strongly_convex(mu, self.l)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub algorithm: AlgorithmKind,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_metric")]
    pub metric: String,
    #[serde(default = "default_lam_minus")]
    pub lam_minus: f64,
    #[serde(default = "default_lam_plus")]
    pub lam_plus: f64,
    /// Function class shared by all agents unless `classes` is given.
    #[serde(default = "one")]
    pub l: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    /// Two classes for `heterogeneity`; the first has proportion `theta`.
    #[serde(default)]
    pub classes: Vec<ClassConfig>,
    #[serde(default = "one")]
    pub r1: f64,
    #[serde(default = "one")]
    pub r2: f64,
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default)]
    pub theta_grid: Vec<f64>,
    /// Step size; defaults to `1/(4L)` for EXTRA and `1/L` for DGD.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "default_alpha_range")]
    pub alpha_range: [f64; 2],
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_golden_iters")]
    pub golden_iters: usize,
    /// Metric evaluations per lower-bound search; 0 skips the search.
    #[serde(default)]
    pub oracle_budget: usize,
    #[serde(default = "default_oracle_dim")]
    pub oracle_dim: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub solver_tol: Option<f64>,
    /// Fills `runtime_ms`; off by default so output is reproducible byte for byte.
    #[serde(default)]
    pub record_runtime: bool,
    /// Worker threads; 0 uses the available parallelism.
    #[serde(default)]
    pub threads: usize,
}

fn one() -> f64 {
    1.0
}
fn default_k() -> usize {
    15
}
fn default_metric() -> String {
    "e_f".into()
}
fn default_lam_minus() -> f64 {
    -0.5
}
fn default_lam_plus() -> f64 {
    0.5
}
fn default_mu() -> f64 {
    0.1
}
fn default_n_grid() -> Vec<usize> {
    vec![2]
}
fn default_alpha_range() -> [f64; 2] {
    [0.05, 1.5]
}
fn default_grid_points() -> usize {
    10
}
fn default_golden_iters() -> usize {
    14
}
fn default_oracle_dim() -> usize {
    2
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Settings of the corresponding published experiment.
    pub fn preset(kind: ExperimentKind) -> Self {
        let mut c: Self = serde_json::from_value(serde_json::json!({ "experiment": kind })).expect("defaults");
        match kind {
            ExperimentKind::NSweep => {
                c.metric = "e_f_worst".into();
                c.alpha = Some(0.78);
                c.n_grid = vec![2, 4, 8, 16, 32, 64];
            }
            ExperimentKind::PercentileCurve | ExperimentKind::LimitCheck => {
                c.metric = "percentile_80".into();
                c.alpha = Some(0.78);
                c.n_grid = vec![5, 10, 25, 50, 100];
            }
            ExperimentKind::Heterogeneity => {
                c.metric = "e_x".into();
                c.classes = vec![
                    ClassConfig { l: 1.0, mu: None, kappa: Some(100.0) },
                    ClassConfig { l: 1.0, mu: None, kappa: Some(10.0) },
                ];
                c.n_grid = vec![5];
                c.theta_grid = vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
            }
            ExperimentKind::StepsizeSweep => {
                c.metric = "e_f".into();
            }
            ExperimentKind::EquivalenceCheck => {
                c.k = 3;
                c.metric = "e_x".into();
                c.n_grid = vec![2, 3, 4];
            }
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let metric = Metric::parse(&self.metric)?;
        if self.n_grid.is_empty() && self.experiment != ExperimentKind::StepsizeSweep {
            return Err(PepError::InvalidConfig("`n_grid` is empty".into()));
        }
        if !(self.alpha_range[0] > 0.0 && self.alpha_range[0] < self.alpha_range[1]) {
            return Err(PepError::InvalidConfig("`alpha_range` must be increasing and positive".into()));
        }
        if self.k == 0 {
            return Err(PepError::InvalidConfig("`k` must be at least 1".into()));
        }
        if !(self.r1 > 0.0 && self.r2 > 0.0) {
            return Err(PepError::InvalidConfig("`r1` and `r2` must be positive".into()));
        }
        MatrixClass::new(self.lam_minus, self.lam_plus, "W")?;
        FunctionClass::smooth_strongly_convex(self.mu, self.l)?;
        for c in &self.classes {
            c.function_class()?;
        }
        match self.experiment {
            ExperimentKind::Heterogeneity => {
                if self.classes.len() != 2 {
                    return Err(PepError::InvalidConfig("heterogeneity needs exactly two `classes`".into()));
                }
                if !metric.is_symmetric() {
                    return Err(PepError::InvalidConfig("heterogeneity needs a symmetric metric".into()));
                }
                if self.theta_grid.is_empty() || self.theta_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
                    return Err(PepError::InvalidConfig("`theta_grid` must be nonempty within [0, 1]".into()));
                }
            }
            ExperimentKind::PercentileCurve => {
                if !matches!(metric, Metric::Percentile(_)) {
                    return Err(PepError::InvalidConfig("percentile_curve needs a `percentile_<k>` metric".into()));
                }
            }
            ExperimentKind::StepsizeSweep => {
                if self.grid_points < 3 {
                    return Err(PepError::InvalidConfig("`grid_points` must be at least 3".into()));
                }
                if self.algorithm == AlgorithmKind::ConsensusOnly {
                    return Err(PepError::InvalidConfig("consensus_only has no step size".into()));
                }
            }
            _ => {}
        }
        if !self.classes.is_empty() && self.experiment != ExperimentKind::Heterogeneity {
            return Err(PepError::InvalidConfig("`classes` is only used by heterogeneity".into()));
        }
        Ok(())
    }

    fn default_alpha(&self) -> f64 {
        let l = if self.classes.is_empty() { self.l } else { self.classes.iter().map(|c| c.l).fold(0.0, f64::max) };
        match self.algorithm {
            AlgorithmKind::Dgd => 1.0 / l,
            _ => 0.25 / l,
        }
    }

    fn spec(&self, alpha: f64) -> Result<AlgorithmSpec> {
        match self.algorithm {
            AlgorithmKind::Extra => build_extra(self.k, alpha),
            AlgorithmKind::Dgd => build_dgd_constant(self.k, alpha),
            AlgorithmKind::ConsensusOnly => build_consensus_only(self.k),
        }
    }

    fn initial(&self) -> Vec<InitialCondition> {
        match self.algorithm {
            AlgorithmKind::ConsensusOnly => vec![InitialCondition::new(InitialKind::AvgSpread2, self.r1)],
            _ => InitialCondition::standard(self.r1, self.r2),
        }
    }

    fn settings(&self, metric: &Metric, classes: Vec<FunctionClass>) -> Result<PepSettings> {
        Ok(PepSettings {
            function_classes: classes,
            matrix_classes: vec![MatrixClass::new(self.lam_minus, self.lam_plus, "W")?],
            metric: metric.clone(),
            initial: self.initial(),
        })
    }

    /// Closed-form EXTRA guarantee, when its assumptions hold.
    fn theory(&self, metric: &Metric, alpha: f64) -> Option<f64> {
        let symmetric_spectrum = (self.lam_minus + self.lam_plus).abs() < 1e-12 && self.lam_plus < 1.0;
        if self.algorithm != AlgorithmKind::Extra
            || !self.classes.is_empty()
            || !symmetric_spectrum
            || (alpha - 0.25 / self.l).abs() > 1e-12
        {
            return None;
        }
        let (ef, ex, _) = theoretical_bound(self.k, self.l, self.mu, self.lam_plus, self.r1, self.r2).ok()?;
        match metric {
            Metric::AvgFunctionGap => Some(ef),
            Metric::AvgIterateError => Some(ex),
            _ => None,
        }
    }
}

/// One CSV row. `n` is empty for step-size rows and `inf` for limit rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub experiment: String,
    pub algorithm: String,
    pub k: usize,
    pub metric: String,
    pub n: String,
    pub theta: Option<f64>,
    pub alpha: f64,
    pub stage: String,
    pub pep_value: f64,
    pub reference_value: Option<f64>,
    pub oracle_lower: Option<f64>,
    pub theoretical_upper: Option<f64>,
    pub solver_status: String,
    pub runtime_ms: Option<u64>,
}

impl ExperimentRow {
    /// Numeric view of a column, for fits.
    pub fn column(&self, name: &str) -> Option<f64> {
        match name {
            "k" => Some(self.k as f64),
            "n" => self.n.parse().ok(),
            "theta" => self.theta,
            "alpha" => Some(self.alpha),
            "pep_value" => Some(self.pep_value),
            "reference_value" => self.reference_value,
            "oracle_lower" => self.oracle_lower,
            "theoretical_upper" => self.theoretical_upper,
            _ => None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.solver_status == SolveStatus::Optimal.as_str()
    }
}

/// Least-squares slope of `log y` against `log x` over the rows.
pub fn fit_log_slope(rows: &[ExperimentRow], x_col: &str, y_col: &str) -> Result<f64> {
    let mut xs = Vec::with_capacity(rows.len());
    let mut ys = Vec::with_capacity(rows.len());
    for r in rows {
        match (r.column(x_col), r.column(y_col)) {
            (Some(x), Some(y)) => {
                xs.push(x);
                ys.push(y);
            }
            _ => return Err(PepError::InvalidLogFit(format!("row without numeric `{x_col}` or `{y_col}`"))),
        }
    }
    log_slope(&xs, &ys)
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(PepError::InvalidLogFit("need at least three points".into()));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(PepError::InvalidLogFit("values must be positive".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(PepError::InvalidLogFit("x values are all equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Whether every row was solved to optimality.
pub fn all_optimal(rows: &[ExperimentRow]) -> bool {
    rows.iter().all(ExperimentRow::is_optimal)
}

pub fn write_csv<W: Write>(rows: &[ExperimentRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Compact PEP value at a fixed partition.
struct Point {
    value: f64,
    status: SolveStatus,
}

fn solve_compact(trace: &AlgorithmTrace, partition: &EquivalencePartition, settings: &PepSettings, opts: &SolverOptions) -> Result<Point> {
    let pep = build_compact_pep(trace, partition, settings)?;
    let sol = pep.solve(opts)?;
    Ok(Point { value: sol.value, status: sol.status })
}

fn worse(a: SolveStatus, b: SolveStatus) -> SolveStatus {
    if a == SolveStatus::Optimal {
        b
    } else {
        a
    }
}

/// Work unit: one row.
#[derive(Clone, Debug)]
enum Job {
    /// Finite `N` with the given class sizes and classes.
    Finite { n: usize, theta: Option<f64>, sizes: Vec<usize>, classes: Vec<FunctionClass> },
    /// Many-agent limit.
    Limit,
}

/// Runs the experiment described by `cfg`. Rows are in grid order.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &SolverOptions) -> Result<Vec<ExperimentRow>> {
    cfg.validate()?;
    let mut opts = opts.clone().with_facial_reduction(true);
    if let Some(t) = cfg.solver_tol {
        opts = opts.with_tolerance(t);
    }
    let metric = Metric::parse(&cfg.metric)?;
    if cfg.experiment == ExperimentKind::StepsizeSweep {
        return stepsize_sweep(cfg, &metric, &opts);
    }
    let alpha = cfg.alpha.unwrap_or_else(|| cfg.default_alpha());
    let spec = cfg.spec(alpha)?;
    let trace = unroll(&spec, &metric.common_points(&spec.output))?;
    let base = FunctionClass::smooth_strongly_convex(cfg.mu, cfg.l)?;

    let mut jobs = Vec::new();
    match cfg.experiment {
        ExperimentKind::Heterogeneity => {
            let c1 = cfg.classes[0].function_class()?;
            let c2 = cfg.classes[1].function_class()?;
            for &n in &cfg.n_grid {
                for &theta in &cfg.theta_grid {
                    let n1f = theta * n as f64;
                    let n1 = n1f.round() as usize;
                    if (n1f - n1 as f64).abs() > 1e-9 {
                        return Err(PepError::InvalidConfig(format!("theta {theta} times N = {n} is not an integer")));
                    }
                    let (mut sizes, mut classes) = (Vec::new(), Vec::new());
                    if n1 > 0 {
                        sizes.push(n1);
                        classes.push(c1);
                    }
                    if n > n1 {
                        sizes.push(n - n1);
                        classes.push(c2);
                    }
                    jobs.push(Job::Finite { n, theta: Some(theta), sizes, classes });
                }
            }
        }
        _ => {
            for &n in &cfg.n_grid {
                let sizes = metric.class_sizes(n)?;
                let classes = vec![base; sizes.len()];
                jobs.push(Job::Finite { n, theta: None, sizes, classes });
            }
            if matches!(cfg.experiment, ExperimentKind::PercentileCurve | ExperimentKind::LimitCheck) {
                jobs.push(Job::Limit);
            }
        }
    }

    let row = |job: &Job, idx: usize| -> Result<ExperimentRow> {
        let t0 = Instant::now();
        let mut r = ExperimentRow {
            experiment: cfg.experiment.as_str().into(),
            algorithm: cfg.algorithm.as_str().into(),
            k: cfg.k,
            metric: metric.name(),
            n: String::new(),
            theta: None,
            alpha,
            stage: String::new(),
            pep_value: f64::NAN,
            reference_value: None,
            oracle_lower: None,
            theoretical_upper: cfg.theory(&metric, alpha),
            solver_status: String::new(),
            runtime_ms: None,
        };
        match job {
            Job::Limit => {
                let partition = EquivalencePartition::limit_for_metric(&metric)?;
                let settings = cfg.settings(&metric, vec![base; partition.class_count()])?;
                let p = solve_compact(&trace, &partition, &settings, &opts)?;
                r.n = "inf".into();
                r.stage = "limit".into();
                r.pep_value = p.value;
                r.solver_status = p.status.as_str().into();
            }
            Job::Finite { n, theta, sizes, classes } => {
                let partition = EquivalencePartition::finite(sizes)?;
                let settings = cfg.settings(&metric, classes.clone())?;
                let p = solve_compact(&trace, &partition, &settings, &opts)?;
                let mut status = p.status;
                r.n = n.to_string();
                r.theta = *theta;
                r.stage = "compact".into();
                r.pep_value = p.value;
                if cfg.experiment == ExperimentKind::EquivalenceCheck {
                    let ap = build_agent_pep(&trace, sizes, &settings, &ConsensusMode::Relaxed)?;
                    let cert = ap.solve(&opts, false)?;
                    r.reference_value = Some(cert.value);
                    status = worse(status, cert.status);
                }
                if cfg.oracle_budget > 0 && *n >= 2 {
                    let seed = cfg.seed.wrapping_add(idx as u64);
                    let found = lower_bound_search(&settings, &spec, sizes, cfg.oracle_dim, cfg.oracle_budget, seed)?;
                    r.oracle_lower = Some(found.value);
                }
                r.solver_status = status.as_str().into();
            }
        }
        if cfg.record_runtime {
            r.runtime_ms = Some(t0.elapsed().as_millis() as u64);
        }
        Ok(r)
    };
    let mut rows = parallel_map(&jobs, cfg.threads, row)?;
    if cfg.experiment == ExperimentKind::LimitCheck {
        let limit = rows.last().map(|r| r.pep_value);
        for r in rows.iter_mut() {
            r.reference_value = limit;
        }
    }
    Ok(rows)
}

/// Maps `f(job, index)` over `jobs` on a small worker pool, keeping order.
fn parallel_map<J: Sync, T: Send>(
    jobs: &[J],
    threads: usize,
    f: impl Fn(&J, usize) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let workers = if threads == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        threads
    }
    .min(jobs.len())
    .max(1);
    let slots: Vec<Mutex<Option<Result<T>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                let out = f(&jobs[i], i);
                *slots[i].lock().expect("slot") = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot").expect("every job ran"))
        .collect()
}

/// Grid search over `alpha_range`, then golden-section refinement inside the
/// bracket around the best grid point. One row per evaluation, then a `best` row.
fn stepsize_sweep(cfg: &ExperimentConfig, metric: &Metric, opts: &SolverOptions) -> Result<Vec<ExperimentRow>> {
    let n = *cfg.n_grid.first().unwrap_or(&2);
    let sizes = metric.class_sizes(n)?;
    let base = FunctionClass::smooth_strongly_convex(cfg.mu, cfg.l)?;
    let settings = cfg.settings(metric, vec![base; sizes.len()])?;
    let partition = EquivalencePartition::finite(&sizes)?;
    let eval = |alpha: f64, stage: &str| -> Result<ExperimentRow> {
        let t0 = Instant::now();
        let spec = cfg.spec(alpha)?;
        let trace = unroll(&spec, &metric.common_points(&spec.output))?;
        let p = solve_compact(&trace, &partition, &settings, opts)?;
        Ok(ExperimentRow {
            experiment: cfg.experiment.as_str().into(),
            algorithm: cfg.algorithm.as_str().into(),
            k: cfg.k,
            metric: metric.name(),
            n: n.to_string(),
            theta: None,
            alpha,
            stage: stage.into(),
            pep_value: p.value,
            reference_value: None,
            oracle_lower: None,
            theoretical_upper: cfg.theory(metric, alpha),
            solver_status: p.status.as_str().into(),
            runtime_ms: cfg.record_runtime.then(|| t0.elapsed().as_millis() as u64),
        })
    };
    let [lo, hi] = cfg.alpha_range;
    let grid: Vec<f64> = (0..cfg.grid_points)
        .map(|i| lo + (hi - lo) * i as f64 / (cfg.grid_points - 1) as f64)
        .collect();
    let mut rows = parallel_map(&grid, cfg.threads, |&a, _| eval(a, "grid"))?;
    // Failed solves never win the bracket.
    let score = |r: &ExperimentRow| if r.is_optimal() && r.pep_value.is_finite() { r.pep_value } else { f64::INFINITY };
    let best = (0..rows.len())
        .min_by(|&i, &j| score(&rows[i]).total_cmp(&score(&rows[j])))
        .expect("nonempty grid");
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(grid.len() - 1)]);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut rc = eval(c, "golden")?;
    let mut rd = eval(d, "golden")?;
    for _ in 0..cfg.golden_iters {
        if score(&rc) <= score(&rd) {
            b = d;
            d = c;
            rows.push(rd);
            rd = rc;
            c = b - g * (b - a);
            rc = eval(c, "golden")?;
        } else {
            a = c;
            c = d;
            rows.push(rc);
            rc = rd;
            d = a + g * (b - a);
            rd = eval(d, "golden")?;
        }
    }
    rows.push(rc);
    rows.push(rd);
    let winner = rows
        .iter()
        .min_by(|x, y| score(x).total_cmp(&score(y)))
        .cloned()
        .expect("nonempty");
    rows.push(ExperimentRow { stage: "best".into(), ..winner });
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_identity_is_one() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        assert!((log_slope(&xs, &xs).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn slope_of_square_root_is_half() {
        let xs = [2.0, 4.0, 8.0, 16.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| x.sqrt()).collect();
        assert!((log_slope(&xs, &ys).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_values_are_rejected() {
        let err = log_slope(&[1.0, 2.0, 3.0], &[1.0, 0.0, 2.0]).unwrap_err();
        assert!(matches!(err, PepError::InvalidLogFit(_)));
        assert!(log_slope(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_json(r#"{"experiment": "n_sweep", "nn_grid": [2]}"#).unwrap_err();
        assert!(matches!(err, PepError::Json(_)));
    }

    #[test]
    fn presets_validate() {
        for kind in [
            ExperimentKind::NSweep,
            ExperimentKind::PercentileCurve,
            ExperimentKind::Heterogeneity,
            ExperimentKind::StepsizeSweep,
            ExperimentKind::EquivalenceCheck,
            ExperimentKind::LimitCheck,
        ] {
            ExperimentConfig::preset(kind).validate().unwrap();
            assert_eq!(ExperimentKind::parse(kind.as_str()).unwrap(), kind);
        }
    }

    #[test]
    fn heterogeneity_needs_two_classes() {
        let mut c = ExperimentConfig::preset(ExperimentKind::Heterogeneity);
        c.classes.pop();
        assert!(c.validate().is_err());
    }
}
