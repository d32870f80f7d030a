//! Agent-dependent PEPs with an explicit number of agents, worst-case
//! certificate recovery and a-posteriori verification.

use nalgebra::{DMatrix, DVector};

use crate::algorithm::AlgorithmTrace;
use crate::error::{PepError, Result};
use crate::expr::{Pairing, Relation, ScalarExpr, ValueScope};
use crate::matrix_class::{gram_factor, recover_averaging_matrix, AveragingFit};
use crate::metrics::{assemble_symbolic, PepSettings};
use crate::model::{compile_into, Affine, GramLayout, ModelConstraint, PepProblem};
use crate::solver::{solve_problem, PepSolution, SolveStatus, SolverOptions};

/// Eigenvalue cutoff used to factor solved Gram matrices.
pub const FACTOR_CUTOFF: f64 = 1e-7;

/// One Gram block over all agents; class-indexed products are instantiated
/// for every member agent.
pub struct AgentLayout {
    pub class_of: Vec<usize>,
    pub members: Vec<Vec<usize>>,
    pub p: usize,
    pub g_block: usize,
    /// `values[i][tag]`, `None` when pinned.
    pub values: Vec<Vec<Option<usize>>>,
}

impl AgentLayout {
    pub fn new(problem: &mut PepProblem, class_sizes: &[usize], trace: &AlgorithmTrace) -> Result<Self> {
        if class_sizes.is_empty() || class_sizes.iter().any(|&s| s == 0) {
            return Err(PepError::InvalidPartition(format!("class sizes {class_sizes:?} must be positive")));
        }
        let class_of: Vec<usize> = class_sizes
            .iter()
            .enumerate()
            .flat_map(|(u, &s)| std::iter::repeat(u).take(s))
            .collect();
        let n = class_of.len();
        let mut members = vec![Vec::new(); class_sizes.len()];
        for (i, &u) in class_of.iter().enumerate() {
            members[u].push(i);
        }
        let p = trace.registry.dim();
        let g_block = problem.add_block("G", n * p);
        let names = trace.registry.value_names().to_vec();
        let values = (0..n)
            .map(|i| {
                names
                    .iter()
                    .enumerate()
                    .map(|(k, name)| (!trace.registry.is_pinned(k)).then(|| problem.add_free(&format!("{name}@{i}"))))
                    .collect()
            })
            .collect();
        Ok(Self {
            class_of,
            members,
            p,
            g_block,
            values,
        })
    }

    pub fn agent_count(&self) -> usize {
        self.class_of.len()
    }

    /// `sum_i w_i e_i (x) a`.
    fn lift(&self, weights: &[(usize, f64)], a: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.agent_count() * self.p];
        for &(i, w) in weights {
            for (k, x) in a.iter().enumerate() {
                v[i * self.p + k] += w * x;
            }
        }
        v
    }

    fn quad(&self, problem: &mut PepProblem, out: &mut Affine, wa: &[(usize, f64)], a: &[f64], wb: &[(usize, f64)], b: &[f64], coef: f64) {
        if let Some(t) = problem.quad(self.g_block, &self.lift(wa, a), &self.lift(wb, b), coef) {
            out.quad.push(t);
        }
    }

    fn compile_at(&self, problem: &mut PepProblem, expr: &ScalarExpr, agent: &[Option<usize>]) -> Result<Affine> {
        let n = self.agent_count();
        let nf = n as f64;
        let all: Vec<(usize, f64)> = (0..n).map(|i| (i, 1.0 / nf)).collect();
        let mut out = Affine {
            constant: expr.constant,
            ..Default::default()
        };
        let pick = |u: usize| agent[u].expect("instantiated class");
        for t in &expr.gram {
            let (a, b) = (t.a.coeffs(), t.b.coeffs());
            match t.pairing {
                Pairing::Local(u) => {
                    let i = pick(u);
                    self.quad(problem, &mut out, &[(i, 1.0)], a, &[(i, 1.0)], b, t.coef);
                }
                Pairing::Cross(u, v) if u == v => {
                    let i = pick(u);
                    let others: Vec<usize> = self.members[u].iter().copied().filter(|&j| j != i).collect();
                    if others.is_empty() {
                        return Err(PepError::InvalidPartition(format!("class {u} has a single agent, no distinct pair")));
                    }
                    let w = 1.0 / others.len() as f64;
                    let wb: Vec<(usize, f64)> = others.iter().map(|&j| (j, w)).collect();
                    self.quad(problem, &mut out, &[(i, 1.0)], a, &wb, b, t.coef);
                }
                Pairing::Cross(u, v) => {
                    self.quad(problem, &mut out, &[(pick(u), 1.0)], a, &[(pick(v), 1.0)], b, t.coef);
                }
                Pairing::Mean => {
                    for i in 0..n {
                        self.quad(problem, &mut out, &[(i, 1.0)], a, &[(i, 1.0)], b, t.coef / nf);
                    }
                }
                Pairing::Total => self.quad(problem, &mut out, &all, a, &all, b, t.coef),
                Pairing::Centered => {
                    for i in 0..n {
                        self.quad(problem, &mut out, &[(i, 1.0)], a, &[(i, 1.0)], b, t.coef / nf);
                    }
                    self.quad(problem, &mut out, &all, a, &all, b, -t.coef);
                }
            }
        }
        for v in &expr.values {
            match v.scope {
                ValueScope::Local(u) => {
                    if let Some(f) = self.values[pick(u)][v.tag] {
                        out.free.push((f, v.coef));
                    }
                }
                ValueScope::Mean => {
                    for i in 0..n {
                        if let Some(f) = self.values[i][v.tag] {
                            out.free.push((f, v.coef / nf));
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Numeric vector of `a` at agent `i` from a factor `P` (`d x Np`).
    pub fn point(&self, factor: &DMatrix<f64>, i: usize, a: &[f64]) -> DVector<f64> {
        factor.columns(i * self.p, self.p) * DVector::from_column_slice(a)
    }
}

impl GramLayout for AgentLayout {
    fn class_count(&self) -> usize {
        self.members.len()
    }

    fn compile(&self, problem: &mut PepProblem, expr: &ScalarExpr) -> Result<Vec<(String, Affine)>> {
        let classes: Vec<usize> = expr.classes().into_iter().collect();
        for &u in &classes {
            if u >= self.members.len() {
                return Err(PepError::InvalidPartition(format!(
                    "expression refers to class {u} of {}",
                    self.members.len()
                )));
            }
        }
        let mut out = Vec::new();
        let mut assignment = vec![None; self.members.len()];
        let mut idx = vec![0usize; classes.len()];
        loop {
            for (c, &u) in classes.iter().enumerate() {
                assignment[u] = Some(self.members[u][idx[c]]);
            }
            let suffix = if classes.is_empty() {
                String::new()
            } else {
                let agents: Vec<String> = classes.iter().map(|&u| assignment[u].unwrap().to_string()).collect();
                format!("@{}", agents.join(","))
            };
            out.push((suffix, self.compile_at(problem, expr, &assignment)?));
            // Odometer over member choices.
            let mut c = 0;
            loop {
                if c == classes.len() {
                    return Ok(out);
                }
                idx[c] += 1;
                if idx[c] < self.members[classes[c]].len() {
                    break;
                }
                idx[c] = 0;
                c += 1;
            }
        }
    }
}

/// How consensus steps enter the agent-dependent PEP.
#[derive(Clone, Debug, PartialEq)]
pub enum ConsensusMode {
    /// Convex relaxation over the whole matrix class.
    Relaxed,
    /// A fixed averaging matrix, through `y_i = sum_j W_ij x_j`.
    Known(DMatrix<f64>),
}

pub struct AgentPep {
    pub problem: PepProblem,
    pub layout: AgentLayout,
    pub class_sizes: Vec<usize>,
}

/// Assembles the agent-dependent PEP for the given class sizes.
pub fn build_agent_pep(
    trace: &AlgorithmTrace,
    class_sizes: &[usize],
    settings: &PepSettings,
    mode: &ConsensusMode,
) -> Result<AgentPep> {
    let n: usize = class_sizes.iter().sum();
    if n < 2 {
        return Err(PepError::InvalidPartition("the agent-dependent PEP needs N >= 2".into()));
    }
    let singletons: Vec<bool> = class_sizes.iter().map(|&s| s == 1).collect();
    let relaxed = matches!(mode, ConsensusMode::Relaxed);
    let symbolic = assemble_symbolic(trace, &singletons, settings, relaxed)?;
    let mut problem = PepProblem::new();
    let layout = AgentLayout::new(&mut problem, class_sizes, trace)?;
    compile_into(&layout, &mut problem, &symbolic)?;
    if let ConsensusMode::Known(w) = mode {
        if w.nrows() != n || w.ncols() != n {
            return Err(PepError::DimensionMismatch { expected: n, found: w.nrows() });
        }
        for set in &trace.consensus {
            for (k, (x, y)) in set.pairs.iter().enumerate() {
                for i in 0..n {
                    let wb: Vec<(usize, f64)> = (0..n).map(|j| (j, -w[(i, j)])).collect();
                    let lhs = layout.lift(&[(i, 1.0)], y.coeffs());
                    let rhs = layout.lift(&wb, x.coeffs());
                    let v: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a + b).collect();
                    let mut affine = Affine::default();
                    if let Some(t) = problem.quad(layout.g_block, &v, &v, 1.0) {
                        affine.quad.push(t);
                    }
                    problem.constraints.push(ModelConstraint {
                        label: format!("known-{}[{k}]@{i}", set.symbol),
                        affine,
                        rel: Relation::Eq,
                    });
                }
            }
        }
    }
    Ok(AgentPep {
        problem,
        layout,
        class_sizes: class_sizes.to_vec(),
    })
}

/// Recovered worst case.
#[derive(Clone, Debug)]
pub struct WorstCaseCertificate {
    pub status: SolveStatus,
    pub value: f64,
    pub gram: DMatrix<f64>,
    /// Per agent: `d x p` block `P_i`, with `d` the numerical rank of `gram`.
    pub points: Vec<DMatrix<f64>>,
    /// Per agent: one entry per value tag (pinned tags are 0).
    pub values: Vec<DVector<f64>>,
    pub dimension: usize,
    /// Largest entry of `P^T P - G`.
    pub factor_residual: f64,
    pub symmetrized: bool,
    pub raw: PepSolution,
}

impl AgentPep {
    pub fn agent_count(&self) -> usize {
        self.layout.agent_count()
    }

    /// Solves and factors the Gram matrix; with `symmetrize` the solution is
    /// first averaged over permutations inside each class.
    pub fn solve(&self, opts: &SolverOptions, symmetrize: bool) -> Result<WorstCaseCertificate> {
        let raw = solve_problem(&self.problem, opts)?;
        let mut gram = raw.blocks[self.layout.g_block].clone();
        let mut values: Vec<DVector<f64>> = self
            .layout
            .values
            .iter()
            .map(|vals| DVector::from_iterator(vals.len(), vals.iter().map(|f| f.map_or(0.0, |k| raw.free[k]))))
            .collect();
        if symmetrize {
            let (g, v) = symmetrize_solution(&self.layout, &gram, &values);
            gram = g;
            values = v;
        }
        Ok(certificate_from(&self.layout, raw, gram, values, symmetrize))
    }
}

fn certificate_from(
    layout: &AgentLayout,
    raw: PepSolution,
    gram: DMatrix<f64>,
    values: Vec<DVector<f64>>,
    symmetrized: bool,
) -> WorstCaseCertificate {
    let factor = gram_factor(&gram, FACTOR_CUTOFF);
    let p = layout.p;
    let points = (0..layout.agent_count())
        .map(|i| factor.columns(i * p, p).into_owned())
        .collect();
    let factor_residual = (factor.transpose() * &factor - &gram).amax();
    WorstCaseCertificate {
        status: raw.status,
        value: raw.value,
        dimension: factor.nrows(),
        gram,
        points,
        values,
        factor_residual,
        symmetrized,
        raw,
    }
}

/// Averages a solution over all permutations of agents inside each class.
pub fn symmetrize_solution(layout: &AgentLayout, gram: &DMatrix<f64>, values: &[DVector<f64>]) -> (DMatrix<f64>, Vec<DVector<f64>>) {
    let p = layout.p;
    let n = layout.agent_count();
    let block = |i: usize, j: usize| gram.view((i * p, j * p), (p, p)).into_owned();
    let u_count = layout.members.len();
    let mut diag = Vec::new();
    let mut within = Vec::new();
    for u in 0..u_count {
        let m = &layout.members[u];
        let mut a = DMatrix::zeros(p, p);
        for &i in m {
            a += block(i, i);
        }
        diag.push(a / m.len() as f64);
        if m.len() > 1 {
            let mut r = DMatrix::zeros(p, p);
            for &i in m {
                for &j in m {
                    if i != j {
                        r += block(i, j);
                    }
                }
            }
            within.push(Some(r / (m.len() * (m.len() - 1)) as f64));
        } else {
            within.push(None);
        }
    }
    let mut cross = vec![vec![DMatrix::zeros(p, p); u_count]; u_count];
    for u in 0..u_count {
        for v in 0..u_count {
            if u == v {
                continue;
            }
            let mut c = DMatrix::zeros(p, p);
            for &i in &layout.members[u] {
                for &j in &layout.members[v] {
                    c += block(i, j);
                }
            }
            cross[u][v] = c / (layout.members[u].len() * layout.members[v].len()) as f64;
        }
    }
    let mut g = DMatrix::zeros(n * p, n * p);
    for i in 0..n {
        for j in 0..n {
            let (u, v) = (layout.class_of[i], layout.class_of[j]);
            let b = if i == j {
                diag[u].clone()
            } else if u == v {
                within[u].clone().unwrap()
            } else {
                cross[u][v].clone()
            };
            g.view_mut((i * p, j * p), (p, p)).copy_from(&b);
        }
    }
    let g = (&g + g.transpose()) * 0.5;
    let mut vals = values.to_vec();
    for m in &layout.members {
        let mut avg = DVector::zeros(values[0].len());
        for &i in m {
            avg += &values[i];
        }
        avg /= m.len() as f64;
        for &i in m {
            vals[i] = avg.clone();
        }
    }
    (g, vals)
}

/// Outcome of the a-posteriori checks.
#[derive(Clone, Debug)]
pub struct VerificationReport {
    /// Smallest interpolation slack over all agents and ordered pairs.
    pub interpolation_min_slack: f64,
    /// One fit per consensus symbol.
    pub averaging: Vec<(String, AveragingFit)>,
    /// Largest relative orthogonal-Procrustes residual `min_Q ||P_i - Q P_1|| / ||P_1||`
    /// over agents of each class against the first member.
    pub procrustes_residual: f64,
    /// Largest difference between value vectors inside a class.
    pub value_spread: f64,
}

impl VerificationReport {
    /// Whether the worst case is realized by an averaging matrix of the class.
    pub fn tight(&self) -> bool {
        self.averaging.iter().all(|(_, f)| f.feasible)
    }
}

/// `min_Q ||a - Q b||_F` over orthogonal `Q`.
pub fn procrustes_residual(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let m = a * b.transpose();
    let svd = m.svd(true, true);
    let q = svd.u.unwrap() * svd.v_t.unwrap();
    (a - q * b).norm()
}

/// Checks interpolation, fits averaging matrices to the recovered consensus
/// steps and measures the symmetry of the blocks.
pub fn verify_certificate(
    cert: &WorstCaseCertificate,
    pep: &AgentPep,
    trace: &AlgorithmTrace,
    settings: &PepSettings,
    fit_tol: f64,
) -> Result<VerificationReport> {
    let layout = &pep.layout;
    let n = layout.agent_count();
    let triplets = trace.interpolation_triplets();
    let mut min_slack = f64::INFINITY;
    for i in 0..n {
        let fc = &settings.function_classes[layout.class_of[i]];
        let num: Vec<(DVector<f64>, DVector<f64>, f64)> = triplets
            .iter()
            .map(|t| (&cert.points[i] * DVector::from_column_slice(t.x.coeffs()), &cert.points[i] * DVector::from_column_slice(t.g.coeffs()), cert.values[i][t.f]))
            .collect();
        for (k, a) in num.iter().enumerate() {
            for (l, b) in num.iter().enumerate() {
                if k == l {
                    continue;
                }
                let s = fc.pair_slack((a.0.as_slice(), a.1.as_slice(), a.2), (b.0.as_slice(), b.1.as_slice(), b.2));
                min_slack = min_slack.min(s);
            }
        }
    }
    let mut averaging = Vec::new();
    for set in &trace.consensus {
        let class = settings.matrix_class(&set.symbol)?;
        let pairs: Vec<(DVector<f64>, DVector<f64>)> = set
            .pairs
            .iter()
            .map(|(x, y)| (stack(&cert.points, x.coeffs()), stack(&cert.points, y.coeffs())))
            .collect();
        averaging.push((set.symbol.clone(), recover_averaging_matrix(&pairs, n, class, fit_tol)?));
    }
    let mut proc: f64 = 0.0;
    let mut spread: f64 = 0.0;
    for m in &layout.members {
        let first = m[0];
        let scale = cert.points[first].norm().max(1e-300);
        for &i in &m[1..] {
            proc = proc.max(procrustes_residual(&cert.points[i], &cert.points[first]) / scale);
            spread = spread.max((&cert.values[i] - &cert.values[first]).amax());
        }
    }
    Ok(VerificationReport {
        interpolation_min_slack: min_slack,
        averaging,
        procrustes_residual: proc,
        value_spread: spread,
    })
}

fn stack(points: &[DMatrix<f64>], a: &[f64]) -> DVector<f64> {
    let d = points.first().map_or(0, |p| p.nrows());
    let a = DVector::from_column_slice(a);
    let mut out = DVector::zeros(points.len() * d);
    for (i, p) in points.iter().enumerate() {
        out.rows_mut(i * d, d).copy_from(&(p * &a));
    }
    out
}
