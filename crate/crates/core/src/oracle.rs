//! Explicit quadratic instances: simulation of algorithms, lower bounds by
//! search, and the closed-form EXTRA guarantee.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::algorithm::{AlgorithmSpec, AlgorithmTrace, Step};
use crate::error::{PepError, Result};
use crate::function_class::FunctionClass;
use crate::matrix_class::{consensus_complement, MatrixClass};
use crate::metrics::{GradPoint, InitialCondition, InitialKind, Metric, PepSettings};

/// `f_i(x) = 1/2 (x - c_i)^T H_i (x - c_i)` for each agent, an averaging
/// matrix and starting points.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplicitInstance {
    pub hessians: Vec<DMatrix<f64>>,
    pub centers: Vec<DVector<f64>>,
    pub w: DMatrix<f64>,
    pub starts: Vec<DVector<f64>>,
}

impl ExplicitInstance {
    pub fn n(&self) -> usize {
        self.hessians.len()
    }

    pub fn d(&self) -> usize {
        self.centers.first().map_or(0, |c| c.len())
    }

    /// Minimizer of the average function.
    pub fn minimizer(&self) -> Result<DVector<f64>> {
        let d = self.d();
        let mut h = DMatrix::zeros(d, d);
        let mut r = DVector::zeros(d);
        for (hi, ci) in self.hessians.iter().zip(&self.centers) {
            h += hi;
            r += hi * ci;
        }
        h.cholesky()
            .map(|c| c.solve(&r))
            .ok_or_else(|| PepError::InvalidFunctionClass("average function is not strongly convex".into()))
    }

    pub fn value(&self, i: usize, x: &DVector<f64>) -> f64 {
        let e = x - &self.centers[i];
        0.5 * e.dot(&(&self.hessians[i] * &e))
    }

    pub fn gradient(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.hessians[i] * (x - &self.centers[i])
    }

    /// Average of the local functions.
    pub fn average_value(&self, x: &DVector<f64>) -> f64 {
        (0..self.n()).map(|i| self.value(i, x)).sum::<f64>() / self.n() as f64
    }

    /// Checks each Hessian spectrum against its agent's class and `W`
    /// against the matrix class.
    pub fn validate(&self, classes: &[FunctionClass], matrix: &MatrixClass, tol: f64) -> Result<()> {
        let n = self.n();
        if classes.len() != n || self.centers.len() != n || self.starts.len() != n || self.w.nrows() != n {
            return Err(PepError::DimensionMismatch {
                expected: n,
                found: classes.len(),
            });
        }
        for (i, (h, fc)) in self.hessians.iter().zip(classes).enumerate() {
            let ev = h.clone().symmetric_eigenvalues();
            if (h - h.transpose()).amax() > tol || ev.min() < fc.mu - tol || ev.max() > fc.l + tol {
                return Err(PepError::InvalidFunctionClass(format!(
                    "agent {i}: Hessian spectrum [{}, {}] not in [{}, {}]",
                    ev.min(),
                    ev.max(),
                    fc.mu,
                    fc.l
                )));
            }
        }
        let w = &self.w;
        if (w - w.transpose()).amax() > tol {
            return Err(PepError::InvalidMatrixClass("W is not symmetric".into()));
        }
        let ones = DVector::from_element(n, 1.0);
        if (w * &ones - &ones).amax() > tol {
            return Err(PepError::InvalidMatrixClass("rows of W do not sum to one".into()));
        }
        let q = consensus_complement(n);
        for l in (q.transpose() * w * &q).symmetric_eigenvalues().iter() {
            if *l < matrix.lam_minus - tol || *l > matrix.lam_plus + tol {
                return Err(PepError::InvalidMatrixClass(format!(
                    "eigenvalue {l} outside [{}, {}]",
                    matrix.lam_minus, matrix.lam_plus
                )));
            }
        }
        Ok(())
    }

    /// Multiplies centers and starts by `s`, so every metric and initial
    /// quantity is multiplied by `s^2`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            hessians: self.hessians.clone(),
            centers: self.centers.iter().map(|c| c * s).collect(),
            w: self.w.clone(),
            starts: self.starts.iter().map(|c| c * s).collect(),
        }
    }
}

/// Trajectory of one run; every named point holds one vector per agent.
#[derive(Clone, Debug)]
pub struct SimulationRun {
    pub points: BTreeMap<String, Vec<DVector<f64>>>,
    pub output: Vec<DVector<f64>>,
    pub xstar: DVector<f64>,
}

fn matrix_apply(w: &DMatrix<f64>, xs: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let n = xs.len();
    (0..n)
        .map(|i| {
            let mut y = DVector::zeros(xs[0].len());
            for j in 0..n {
                y += &xs[j] * w[(i, j)];
            }
            y
        })
        .collect()
}

/// Runs `spec` on the instance with exact recursion. Every consensus symbol
/// uses the instance's `W`.
pub fn simulate_run(instance: &ExplicitInstance, spec: &AlgorithmSpec) -> Result<SimulationRun> {
    let n = instance.n();
    if spec.initial.len() != 1 {
        return Err(PepError::InvalidAlgorithm("simulation supports a single starting point".into()));
    }
    let mut pts: BTreeMap<String, Vec<DVector<f64>>> = BTreeMap::new();
    pts.insert(spec.initial[0].clone(), instance.starts.clone());
    let get = |pts: &BTreeMap<String, Vec<DVector<f64>>>, name: &str| -> Result<Vec<DVector<f64>>> {
        pts.get(name).cloned().ok_or_else(|| PepError::UnknownTag(name.to_string()))
    };
    for step in &spec.steps {
        match step {
            Step::Gradient { point, grad, .. } => {
                let x = get(&pts, point)?;
                let g = (0..n).map(|i| instance.gradient(i, &x[i])).collect();
                pts.insert(grad.clone(), g);
            }
            Step::Consensus { input, output, .. } => {
                let x = get(&pts, input)?;
                pts.insert(output.clone(), matrix_apply(&instance.w, &x));
            }
            Step::Combine { output, terms } => {
                let mut v = vec![DVector::zeros(instance.d()); n];
                for (c, name) in terms {
                    let t = get(&pts, name)?;
                    for i in 0..n {
                        v[i] += &t[i] * *c;
                    }
                }
                pts.insert(output.clone(), v);
            }
        }
    }
    let output = get(&pts, &spec.output)?;
    Ok(SimulationRun {
        points: pts,
        output,
        xstar: instance.minimizer()?,
    })
}

/// Recomputes the output from the trace's coefficient vectors and the
/// simulated basis columns, agent by agent.
pub fn replay_trace(run: &SimulationRun, trace: &AlgorithmTrace) -> Result<Vec<DVector<f64>>> {
    let names = trace.registry.vector_names();
    let n = run.output.len();
    let d = run.xstar.len();
    let coeffs = trace.output_point().coeffs();
    let mut out = vec![DVector::zeros(d); n];
    for (k, name) in names.iter().enumerate() {
        if coeffs[k] == 0.0 {
            continue;
        }
        let col = run
            .points
            .get(name)
            .ok_or_else(|| PepError::UnknownTag(format!("basis column `{name}` was not simulated")))?;
        for i in 0..n {
            out[i] += &col[i] * coeffs[k];
        }
    }
    Ok(out)
}

impl SimulationRun {
    /// Squared distances of the output to the optimum, per agent.
    pub fn agent_errors(&self) -> Vec<f64> {
        self.output.iter().map(|x| (x - &self.xstar).norm_squared()).collect()
    }

    pub fn agent_function_errors(&self, instance: &ExplicitInstance) -> Vec<f64> {
        let fstar = instance.average_value(&self.xstar);
        self.output.iter().map(|x| instance.average_value(x) - fstar).collect()
    }

    fn mean_output(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.xstar.len());
        for x in &self.output {
            m += x;
        }
        m / self.output.len() as f64
    }

    pub fn metric(&self, metric: &Metric, instance: &ExplicitInstance) -> f64 {
        let n = self.output.len() as f64;
        match metric {
            Metric::AvgFunctionGap => instance.average_value(&self.mean_output()) - instance.average_value(&self.xstar),
            Metric::AvgIterateError => self.agent_errors().iter().sum::<f64>() / n,
            Metric::WorstAgentFunction => self.agent_function_errors(instance).into_iter().fold(f64::MIN, f64::max),
            Metric::WorstAgentIterate => self.agent_errors().into_iter().fold(f64::MIN, f64::max),
            Metric::Percentile(k) => percentile_value(&self.agent_errors(), *k),
            Metric::ConsensusSpread => {
                let m = self.mean_output();
                self.output.iter().map(|x| (x - &m).norm_squared()).sum::<f64>() / n
            }
        }
    }
}

/// Error of the agent ranked right after the `floor((1 - k/100) N)` worst.
pub fn percentile_value(errors: &[f64], k: f64) -> f64 {
    let mut e = errors.to_vec();
    e.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let excluded = ((1.0 - k / 100.0) * e.len() as f64 + 1e-9).floor() as usize;
    e[excluded.min(e.len() - 1)]
}

/// Left-hand side of an initial condition on the instance.
pub fn initial_quantity(instance: &ExplicitInstance, cond: &InitialCondition) -> Result<f64> {
    let n = instance.n();
    let nf = n as f64;
    let xs = instance.minimizer()?;
    let x0 = &instance.starts;
    let grad = |at: GradPoint, i: usize| match at {
        GradPoint::Start => instance.gradient(i, &x0[i]),
        GradPoint::Optimum => instance.gradient(i, &xs),
    };
    let mean0 = x0.iter().fold(DVector::zeros(instance.d()), |a, b| a + b) / nf;
    Ok(match cond.kind {
        InitialKind::AvgDist2 => x0.iter().map(|x| (x - &xs).norm_squared()).sum::<f64>() / nf,
        InitialKind::PerAgentDist2 => x0.iter().map(|x| (x - &xs).norm_squared()).fold(0.0, f64::max),
        InitialKind::AvgGrad2(at) => (0..n).map(|i| grad(at, i).norm_squared()).sum::<f64>() / nf,
        InitialKind::PerAgentGrad2(at) => (0..n).map(|i| grad(at, i).norm_squared()).fold(0.0, f64::max),
        InitialKind::AvgSpread2 => x0.iter().map(|x| (x - &mean0).norm_squared()).sum::<f64>() / nf,
        InitialKind::EqualStarts => x0.iter().map(|x| (x - &mean0).norm_squared()).sum::<f64>() / nf,
        InitialKind::AvgFGap => (0..n).map(|i| instance.value(i, &x0[i]) - instance.value(i, &xs)).sum::<f64>() / nf,
    })
}

/// Metric of the instance rescaled so the tightest initial condition is
/// active; `EqualStarts` must hold exactly.
pub fn normalized_metric(instance: &ExplicitInstance, spec: &AlgorithmSpec, settings: &PepSettings) -> Result<f64> {
    let mut ratio: f64 = 0.0;
    for c in &settings.initial {
        let q = initial_quantity(instance, c)?;
        if c.kind == InitialKind::EqualStarts {
            if q > 1e-20 {
                return Err(PepError::InvalidMetric("starts are not equal".into()));
            }
            continue;
        }
        ratio = ratio.max(q / c.bound);
    }
    if ratio <= 0.0 {
        return Ok(0.0);
    }
    let run = simulate_run(instance, spec)?;
    Ok(run.metric(&settings.metric, instance) / ratio)
}

/// Best instance found by the search.
#[derive(Clone, Debug)]
pub struct SearchResult {
    pub value: f64,
    pub instance: ExplicitInstance,
    pub evaluations: usize,
}

/// Search space of the lower-bound search.
#[derive(Clone, Debug)]
struct Params {
    /// Per agent, per dimension: position in `[0, 1]` of the Hessian eigenvalue.
    hess: Vec<Vec<f64>>,
    rot: Vec<DMatrix<f64>>,
    /// Gradients at the optimum `x* = 0` for agents `0..N-1`; the last is `-sum`.
    grads: Vec<DVector<f64>>,
    starts: Vec<DVector<f64>>,
    /// Non-principal eigenvalue positions in `[0, 1]`.
    weig: Vec<f64>,
    wbasis: DMatrix<f64>,
}

fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    if d == 0 {
        return DMatrix::zeros(0, 0);
    }
    let m = DMatrix::from_fn(d, d, |_, _| gauss(rng));
    m.qr().q()
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn extreme_biased(rng: &mut ChaCha8Rng) -> f64 {
    let r: f64 = rng.gen();
    if r < 0.35 {
        0.0
    } else if r < 0.7 {
        1.0
    } else {
        rng.gen()
    }
}

impl Params {
    fn sample(rng: &mut ChaCha8Rng, n: usize, d: usize, equal_starts: bool) -> Self {
        let hess = (0..n).map(|_| (0..d).map(|_| extreme_biased(rng)).collect()).collect();
        let rot = (0..n).map(|_| random_orthogonal(rng, d)).collect();
        let grads = (0..n - 1).map(|_| DVector::from_fn(d, |_, _| gauss(rng))).collect();
        let s0 = DVector::from_fn(d, |_, _| gauss(rng));
        let starts = (0..n)
            .map(|_| if equal_starts { s0.clone() } else { DVector::from_fn(d, |_, _| gauss(rng)) })
            .collect();
        let weig = (0..n - 1).map(|_| extreme_biased(rng)).collect();
        let wbasis = random_orthogonal(rng, n - 1);
        Self {
            hess,
            rot,
            grads,
            starts,
            weig,
            wbasis,
        }
    }

    fn instance(&self, classes: &[FunctionClass], matrix: &MatrixClass) -> ExplicitInstance {
        let n = self.hess.len();
        let d = self.starts[0].len();
        let mut hessians = Vec::with_capacity(n);
        for i in 0..n {
            let fc = &classes[i];
            let top = if fc.l.is_finite() { fc.l } else { fc.mu + 10.0 };
            let ev = DVector::from_iterator(d, self.hess[i].iter().map(|t| fc.mu.max(1e-9) + t * (top - fc.mu.max(1e-9))));
            let h = &self.rot[i] * DMatrix::from_diagonal(&ev) * self.rot[i].transpose();
            hessians.push((&h + h.transpose()) * 0.5);
        }
        let mut grads = self.grads.clone();
        let last = grads.iter().fold(DVector::zeros(d), |a, b| a - b);
        grads.push(last);
        let centers = (0..n)
            .map(|i| -hessians[i].clone().cholesky().expect("positive definite").solve(&grads[i]))
            .collect();
        let q = consensus_complement(n) * &self.wbasis;
        let lam = DVector::from_iterator(
            n - 1,
            self.weig.iter().map(|t| matrix.lam_minus + t * (matrix.lam_plus - matrix.lam_minus)),
        );
        let w = DMatrix::from_element(n, n, 1.0 / n as f64) + &q * DMatrix::from_diagonal(&lam) * q.transpose();
        ExplicitInstance {
            hessians,
            centers,
            w: (&w + w.transpose()) * 0.5,
            starts: self.starts.clone(),
        }
    }

    fn coordinates(&self) -> usize {
        let d = self.starts[0].len();
        self.hess.len() * d + self.grads.len() * d + self.starts.len() * d + self.weig.len()
    }

    fn perturb(&self, k: usize, delta: f64, equal_starts: bool) -> Self {
        let mut p = self.clone();
        let n = p.hess.len();
        let d = p.starts[0].len();
        let mut k = k;
        if k < n * d {
            let v = &mut p.hess[k / d][k % d];
            *v = (*v + delta).clamp(0.0, 1.0);
            return p;
        }
        k -= n * d;
        if k < p.grads.len() * d {
            p.grads[k / d][k % d] += delta;
            return p;
        }
        k -= p.grads.len() * d;
        if k < n * d {
            if equal_starts {
                for s in &mut p.starts {
                    s[k % d] += delta;
                }
            } else {
                p.starts[k / d][k % d] += delta;
            }
            return p;
        }
        k -= n * d;
        p.weig[k] = (p.weig[k] + delta).clamp(0.0, 1.0);
        p
    }
}

/// Randomized search over quadratic instances with `class_sizes` agents
/// per equivalence class in dimension `d`, followed by coordinate ascent
/// from the best sample. `budget` counts metric evaluations; half goes to
/// sampling.
pub fn lower_bound_search(
    settings: &PepSettings,
    spec: &AlgorithmSpec,
    class_sizes: &[usize],
    d: usize,
    budget: usize,
    seed: u64,
) -> Result<SearchResult> {
    if budget == 0 {
        return Err(PepError::InvalidConfig("search budget must be at least 1".into()));
    }
    let n: usize = class_sizes.iter().sum();
    if n < 2 || d == 0 {
        return Err(PepError::InvalidConfig("search needs N >= 2 and d >= 1".into()));
    }
    if settings.function_classes.len() != class_sizes.len() {
        return Err(PepError::InvalidPartition("one function class per equivalence class".into()));
    }
    let matrix = settings
        .matrix_classes
        .first()
        .ok_or_else(|| PepError::InvalidMatrixClass("no matrix class".into()))?;
    let classes: Vec<FunctionClass> = class_sizes
        .iter()
        .zip(&settings.function_classes)
        .flat_map(|(&s, fc)| std::iter::repeat(*fc).take(s))
        .collect();
    let equal = settings.initial.iter().any(|c| c.kind == InitialKind::EqualStarts);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eval = |p: &Params| -> f64 {
        let inst = p.instance(&classes, matrix);
        normalized_metric(&inst, spec, settings).unwrap_or(f64::NEG_INFINITY)
    };
    let samples = if budget == 1 { 1 } else { budget.div_ceil(2) };
    let mut best = Params::sample(&mut rng, n, d, equal);
    let mut best_v = eval(&best);
    let mut used = 1;
    while used < samples {
        let p = Params::sample(&mut rng, n, d, equal);
        let v = eval(&p);
        used += 1;
        if v > best_v {
            best = p;
            best_v = v;
        }
    }
    let mut step = 0.25;
    let coords = best.coordinates();
    'outer: while used < budget && step > 1e-6 {
        let mut improved = false;
        for k in 0..coords {
            for sign in [1.0, -1.0] {
                if used >= budget {
                    break 'outer;
                }
                let p = best.perturb(k, sign * step, equal);
                let v = eval(&p);
                used += 1;
                if v > best_v {
                    best = p;
                    best_v = v;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    let inst = best.instance(&classes, matrix);
    // Report the instance at the scale where the initial conditions bind.
    let mut ratio: f64 = 0.0;
    for c in &settings.initial {
        if c.kind != InitialKind::EqualStarts {
            ratio = ratio.max(initial_quantity(&inst, c)? / c.bound);
        }
    }
    let instance = if ratio > 0.0 { inst.scaled(1.0 / ratio.sqrt()) } else { inst };
    Ok(SearchResult {
        value: best_v,
        instance,
        evaluations: used,
    })
}

/// Closed-form EXTRA guarantee: returns `(E_f bound, E_x bound, tau)` with
/// `tau = 1 / (39 (L/mu + 1/(1 - lam)))`.
pub fn theoretical_bound(k: usize, l: f64, mu: f64, lam: f64, r1: f64, r2: f64) -> Result<(f64, f64, f64)> {
    if !(mu > 0.0 && mu <= l && l.is_finite()) {
        return Err(PepError::InvalidFunctionClass(format!("need 0 < mu <= L, got mu = {mu}, L = {l}")));
    }
    if !(0.0..1.0).contains(&lam) {
        return Err(PepError::InvalidMatrixClass(format!("spectral bound {lam} must lie in [0, 1)")));
    }
    let tau = 1.0 / (39.0 * (l / mu + 1.0 / (1.0 - lam)));
    let decay = (1.0 - tau).powi(k as i32);
    let ef = decay * (l * r1 + r2 / l) / (1.0 - lam);
    let ex = decay * (r1 + r2 / (l * l)) / (1.0 - lam);
    Ok((ef, ex, tau))
}

/// Averaging matrix with prescribed non-principal eigenvalues, built around
/// the eigenvector `1/sqrt(N)` with a Helmert complement.
pub fn averaging_matrix(eigenvalues: &[f64]) -> DMatrix<f64> {
    let n = eigenvalues.len() + 1;
    let q = consensus_complement(n);
    let lam = DVector::from_column_slice(eigenvalues);
    DMatrix::from_element(n, n, 1.0 / n as f64) + &q * DMatrix::from_diagonal(&lam) * q.transpose()
}

/// Eigen-decomposition helper used by tests: spectrum of `W` off `1`.
pub fn nonprincipal_spectrum(w: &DMatrix<f64>) -> Vec<f64> {
    let n = w.nrows();
    let q = consensus_complement(n);
    let e = SymmetricEigen::new(q.transpose() * w * &q);
    let mut v: Vec<f64> = e.eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}
