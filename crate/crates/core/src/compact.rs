//! Compact symmetrized PEPs over agent equivalence classes.
//!
//! Variables are the Gram matrix `T` of the class means (`T_uu = Ga^u/N_u +
//! (1 - 1/N_u) Gr^u`, `T_uv = Gc^{uv}`) and, for every class with more than
//! one agent, `D_u = Ga^u - T_uu = (1 - 1/N_u)(Ga^u - Gr^u)`. Then
//! `Ga^u = T_uu + D_u` and `Gr^u = T_uu - D_u / (N_u - 1)`, and the expanded
//! Gram matrix is PSD exactly when `T` and every `D_u` are. The number of
//! agents only enters through `kappa_u = 1/(N_u - 1)` and the proportions
//! `rho_u = N_u / N`; the many-agent limit sets `kappa_u = 0` and keeps `rho`.

use std::cell::RefCell;
use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::algorithm::AlgorithmTrace;
use crate::error::{PepError, Result};
use crate::expr::{Pairing, Relation, ScalarExpr, ValueScope};
use crate::metrics::{assemble_symbolic, Metric, PepSettings};
use crate::model::{compile_into, Affine, GramLayout, ModelConstraint, PepProblem, QuadTerm};
use crate::solver::{solve_problem, PepSolution, SolveStatus, SolverOptions};

#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceClass {
    pub label: String,
    /// Number of agents; 1 for singletons in the limit.
    pub size: usize,
    /// Share of the agents; 0 for singletons in the limit.
    pub proportion: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PartitionMode {
    Finite,
    Limit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquivalencePartition {
    pub classes: Vec<EquivalenceClass>,
    pub mode: PartitionMode,
}

impl EquivalencePartition {
    /// Finite partition with the given class sizes.
    pub fn finite(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() || sizes.iter().any(|&s| s == 0) {
            return Err(PepError::InvalidPartition(format!("class sizes {sizes:?} must be positive")));
        }
        let n: usize = sizes.iter().sum();
        Ok(Self {
            classes: sizes
                .iter()
                .enumerate()
                .map(|(u, &s)| EquivalenceClass {
                    label: format!("V{}", u + 1),
                    size: s,
                    proportion: s as f64 / n as f64,
                })
                .collect(),
            mode: PartitionMode::Finite,
        })
    }

    /// Many-agent limit; `None` marks a singleton class.
    pub fn limit(proportions: &[Option<f64>]) -> Result<Self> {
        if proportions.is_empty() {
            return Err(PepError::InvalidPartition("no classes".into()));
        }
        let mut total = 0.0;
        for p in proportions.iter().flatten() {
            if !(*p > 0.0 && *p <= 1.0) {
                return Err(PepError::InvalidPartition(format!("proportion {p} outside (0, 1]")));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(PepError::InvalidPartition(format!("proportions sum to {total}, not 1")));
        }
        Ok(Self {
            classes: proportions
                .iter()
                .enumerate()
                .map(|(u, p)| EquivalenceClass {
                    label: format!("V{}", u + 1),
                    size: if p.is_some() { 0 } else { 1 },
                    proportion: p.unwrap_or(0.0),
                })
                .collect(),
            mode: PartitionMode::Limit,
        })
    }

    /// Partition required by `metric` at `n` agents.
    pub fn for_metric(metric: &Metric, n: usize) -> Result<Self> {
        Self::finite(&metric.class_sizes(n)?)
    }

    pub fn limit_for_metric(metric: &Metric) -> Result<Self> {
        Self::limit(&metric.limit_proportions())
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    /// Total number of agents (finite mode only).
    pub fn agent_count(&self) -> Option<usize> {
        match self.mode {
            PartitionMode::Finite => Some(self.classes.iter().map(|c| c.size).sum()),
            PartitionMode::Limit => None,
        }
    }

    pub fn is_singleton(&self, u: usize) -> bool {
        match self.mode {
            PartitionMode::Finite => self.classes[u].size == 1,
            PartitionMode::Limit => self.classes[u].proportion == 0.0,
        }
    }

    pub fn singletons(&self) -> Vec<bool> {
        (0..self.class_count()).map(|u| self.is_singleton(u)).collect()
    }

    pub fn rho(&self, u: usize) -> f64 {
        self.classes[u].proportion
    }

    /// `1/(N_u - 1)` for non-singleton classes, 0 in the limit.
    pub fn kappa(&self, u: usize) -> Option<f64> {
        if self.is_singleton(u) {
            return None;
        }
        Some(match self.mode {
            PartitionMode::Finite => 1.0 / (self.classes[u].size as f64 - 1.0),
            PartitionMode::Limit => 0.0,
        })
    }
}

/// Symmetrized blocks of a compact solution.
#[derive(Clone, Debug, PartialEq)]
pub struct CompactBlocks {
    /// Per class, one value per registered value tag (pinned tags are 0).
    pub fa: Vec<DVector<f64>>,
    pub ga: Vec<DMatrix<f64>>,
    /// Absent for singleton classes.
    pub gr: Vec<Option<DMatrix<f64>>>,
    /// `Gc^{uv}` for every ordered pair `u != v`; `Gc^{vu} = (Gc^{uv})^T`.
    pub gc: BTreeMap<(usize, usize), DMatrix<f64>>,
}

impl CompactBlocks {
    /// Class-mean Gram matrix `H' = D^{-1} H~ D^{-1}` (finite mode).
    pub fn class_mean_gram(&self, partition: &EquivalencePartition) -> DMatrix<f64> {
        let u_count = self.ga.len();
        let p = self.ga.first().map_or(0, |g| g.nrows());
        let mut h = DMatrix::zeros(u_count * p, u_count * p);
        for u in 0..u_count {
            let tuu = match (&self.gr[u], partition.mode) {
                (None, _) => self.ga[u].clone(),
                (Some(gr), PartitionMode::Limit) => gr.clone(),
                (Some(gr), PartitionMode::Finite) => {
                    let nu = partition.classes[u].size as f64;
                    &self.ga[u] / nu + gr * (1.0 - 1.0 / nu)
                }
            };
            h.view_mut((u * p, u * p), (p, p)).copy_from(&tuu);
            for v in 0..u_count {
                if v != u {
                    h.view_mut((u * p, v * p), (p, p)).copy_from(&self.gc[&(u, v)]);
                }
            }
        }
        h
    }
}

/// Matrices that must be PSD for the blocks to come from an actual Gram
/// matrix: `Ga^u` for singletons, `Ga^u - Gr^u` otherwise, and
/// `H~` with `H~_uu = N_u (Ga^u + (N_u - 1) Gr^u)`, `H~_uv = N_u N_v Gc^{uv}`.
pub fn psd_reformulation(partition: &EquivalencePartition, blocks: &CompactBlocks) -> Vec<(String, DMatrix<f64>)> {
    let u_count = blocks.ga.len();
    let p = blocks.ga.first().map_or(0, |g| g.nrows());
    let mut out = Vec::new();
    for u in 0..u_count {
        match &blocks.gr[u] {
            None => out.push((format!("Ga[{u}]"), blocks.ga[u].clone())),
            Some(gr) => out.push((format!("Ga-Gr[{u}]"), &blocks.ga[u] - gr)),
        }
    }
    let mut h = DMatrix::zeros(u_count * p, u_count * p);
    let size = |u: usize| match partition.mode {
        PartitionMode::Finite => partition.classes[u].size as f64,
        PartitionMode::Limit => 1.0,
    };
    for u in 0..u_count {
        let nu = size(u);
        let huu = match (&blocks.gr[u], partition.mode) {
            (None, _) => blocks.ga[u].clone() * nu,
            (Some(gr), PartitionMode::Finite) => (&blocks.ga[u] + gr * (nu - 1.0)) * nu,
            (Some(gr), PartitionMode::Limit) => gr.clone(),
        };
        h.view_mut((u * p, u * p), (p, p)).copy_from(&huu);
        for v in 0..u_count {
            if v != u {
                h.view_mut((u * p, v * p), (p, p)).copy_from(&(&blocks.gc[&(u, v)] * (nu * size(v))));
            }
        }
    }
    out.push(("H".into(), h));
    out
}

/// Single-class form in the averaged variable: `Gt = (Ga + (N-1) Gr)/N` and
/// `Ga - Gt` must be PSD.
pub fn psd_reformulation_gt(n: usize, ga: &DMatrix<f64>, gr: &DMatrix<f64>) -> Vec<(String, DMatrix<f64>)> {
    let nf = n as f64;
    let gt = (ga + gr * (nf - 1.0)) / nf;
    vec![("Gt".into(), gt.clone()), ("Ga-Gt".into(), ga - gt)]
}

/// Whether every matrix has smallest eigenvalue `>= -tol`.
pub fn all_psd(mats: &[(String, DMatrix<f64>)], tol: f64) -> bool {
    mats.iter()
        .all(|(_, m)| m.nrows() == 0 || m.clone().symmetric_eigenvalues().min() >= -tol)
}

/// Materializes the symmetrized values `F^s` (agent-major, `N q`) and Gram
/// matrix `G^s` (`N p x N p`); agents are numbered class by class.
pub fn expand_solution(partition: &EquivalencePartition, blocks: &CompactBlocks) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if partition.mode != PartitionMode::Finite {
        return Err(PepError::InvalidPartition("expansion needs a finite partition".into()));
    }
    let p = blocks.ga.first().map_or(0, |g| g.nrows());
    let q = blocks.fa.first().map_or(0, |f| f.len());
    let class_of: Vec<usize> = partition
        .classes
        .iter()
        .enumerate()
        .flat_map(|(u, c)| std::iter::repeat(u).take(c.size))
        .collect();
    let n = class_of.len();
    let mut f = DVector::zeros(n * q);
    let mut g = DMatrix::zeros(n * p, n * p);
    for i in 0..n {
        let u = class_of[i];
        f.rows_mut(i * q, q).copy_from(&blocks.fa[u]);
        for j in 0..n {
            let v = class_of[j];
            let blk = if i == j {
                blocks.ga[u].clone()
            } else if u == v {
                blocks.gr[u].clone().expect("classes with two agents carry Gr")
            } else {
                blocks.gc[&(u, v)].clone()
            };
            g.view_mut((i * p, j * p), (p, p)).copy_from(&blk);
        }
    }
    Ok((f, g))
}

/// An occurrence of an agent-count dependent coefficient in the compiled data.
#[derive(Clone, Debug, PartialEq)]
pub struct CountUsage {
    pub context: String,
    pub coefficient: f64,
}

/// Maps symbolic products and values onto `T`, `D_u` and per-class values.
pub struct CompactLayout {
    pub partition: EquivalencePartition,
    pub p: usize,
    pub t_block: usize,
    pub d_blocks: Vec<Option<usize>>,
    /// `values[u][tag]`: free variable of that value, `None` when pinned.
    pub values: Vec<Vec<Option<usize>>>,
    usage: RefCell<Vec<CountUsage>>,
}

impl CompactLayout {
    pub fn new(problem: &mut PepProblem, partition: &EquivalencePartition, trace: &AlgorithmTrace) -> Self {
        let u_count = partition.class_count();
        let p = trace.registry.dim();
        let t_block = problem.add_block("T", u_count * p);
        let d_blocks = (0..u_count)
            .map(|u| (!partition.is_singleton(u)).then(|| problem.add_block(&format!("D{u}"), p)))
            .collect();
        let names = trace.registry.value_names().to_vec();
        let values = (0..u_count)
            .map(|u| {
                names
                    .iter()
                    .enumerate()
                    .map(|(k, name)| (!trace.registry.is_pinned(k)).then(|| problem.add_free(&format!("{name}[{u}]"))))
                    .collect()
            })
            .collect();
        Self {
            partition: partition.clone(),
            p,
            t_block,
            d_blocks,
            values,
            usage: RefCell::new(Vec::new()),
        }
    }

    /// Agent-count dependent coefficients used so far.
    pub fn count_usage(&self) -> Vec<CountUsage> {
        self.usage.borrow().clone()
    }

    fn note(&self, context: String, coefficient: f64) {
        self.usage.borrow_mut().push(CountUsage { context, coefficient });
    }

    fn lift(&self, weights: &[(usize, f64)], a: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.partition.class_count() * self.p];
        for &(u, w) in weights {
            for (k, x) in a.iter().enumerate() {
                v[u * self.p + k] += w * x;
            }
        }
        v
    }

    fn push(&self, out: &mut Affine, t: Option<QuadTerm>) {
        if let Some(t) = t {
            out.quad.push(t);
        }
    }

    fn local(&self, problem: &mut PepProblem, out: &mut Affine, u: usize, a: &[f64], b: &[f64], coef: f64) {
        let t = problem.quad(self.t_block, &self.lift(&[(u, 1.0)], a), &self.lift(&[(u, 1.0)], b), coef);
        self.push(out, t);
        if let Some(d) = self.d_blocks[u] {
            let t = problem.quad(d, a, b, coef);
            self.push(out, t);
        }
    }

    fn mean(&self, problem: &mut PepProblem, out: &mut Affine, a: &[f64], b: &[f64], coef: f64) {
        for u in 0..self.partition.class_count() {
            let rho = self.partition.rho(u);
            if rho == 0.0 {
                continue;
            }
            if rho != 1.0 {
                self.note(format!("rho[{u}] in a mean"), rho);
            }
            self.local(problem, out, u, a, b, coef * rho);
        }
    }

    fn total(&self, problem: &mut PepProblem, out: &mut Affine, a: &[f64], b: &[f64], coef: f64) {
        let w: Vec<(usize, f64)> = (0..self.partition.class_count())
            .map(|u| (u, self.partition.rho(u)))
            .filter(|(_, r)| *r != 0.0)
            .collect();
        for &(u, r) in &w {
            if r != 1.0 {
                self.note(format!("rho[{u}] in a total"), r);
            }
        }
        let t = problem.quad(self.t_block, &self.lift(&w, a), &self.lift(&w, b), coef);
        self.push(out, t);
    }
}

impl GramLayout for CompactLayout {
    fn class_count(&self) -> usize {
        self.partition.class_count()
    }

    fn compile(&self, problem: &mut PepProblem, expr: &ScalarExpr) -> Result<Vec<(String, Affine)>> {
        let u_count = self.partition.class_count();
        for u in expr.classes() {
            if u >= u_count {
                return Err(PepError::InvalidPartition(format!("expression refers to class {u} of {u_count}")));
            }
        }
        let mut out = Affine {
            constant: expr.constant,
            ..Default::default()
        };
        for t in &expr.gram {
            let (a, b) = (t.a.coeffs(), t.b.coeffs());
            match t.pairing {
                Pairing::Local(u) => self.local(problem, &mut out, u, a, b, t.coef),
                Pairing::Cross(u, v) if u == v => {
                    let kappa = self.partition.kappa(u).ok_or_else(|| {
                        PepError::InvalidPartition(format!("class {u} has a single agent, no distinct pair"))
                    })?;
                    let tt = problem.quad(self.t_block, &self.lift(&[(u, 1.0)], a), &self.lift(&[(u, 1.0)], b), t.coef);
                    self.push(&mut out, tt);
                    if kappa != 0.0 {
                        self.note(format!("kappa[{u}] in a within-class product"), kappa);
                        let d = self.d_blocks[u].expect("non-singleton class has a D block");
                        let tt = problem.quad(d, a, b, -kappa * t.coef);
                        self.push(&mut out, tt);
                    }
                }
                Pairing::Cross(u, v) => {
                    let tt = problem.quad(self.t_block, &self.lift(&[(u, 1.0)], a), &self.lift(&[(v, 1.0)], b), t.coef);
                    self.push(&mut out, tt);
                }
                Pairing::Mean => self.mean(problem, &mut out, a, b, t.coef),
                Pairing::Total => self.total(problem, &mut out, a, b, t.coef),
                Pairing::Centered => {
                    self.mean(problem, &mut out, a, b, t.coef);
                    self.total(problem, &mut out, a, b, -t.coef);
                }
            }
        }
        for v in &expr.values {
            match v.scope {
                ValueScope::Local(u) => {
                    if let Some(f) = self.values[u][v.tag] {
                        out.free.push((f, v.coef));
                    }
                }
                ValueScope::Mean => {
                    for u in 0..u_count {
                        let rho = self.partition.rho(u);
                        if rho == 0.0 {
                            continue;
                        }
                        if rho != 1.0 {
                            self.note(format!("rho[{u}] in a mean value"), rho);
                        }
                        if let Some(f) = self.values[u][v.tag] {
                            out.free.push((f, v.coef * rho));
                        }
                    }
                }
            }
        }
        Ok(vec![(String::new(), out)])
    }
}

/// An assembled compact PEP.
pub struct CompactPep {
    pub problem: PepProblem,
    pub layout: CompactLayout,
    pub value_names: Vec<String>,
}

/// Solved compact PEP.
#[derive(Clone, Debug)]
pub struct CompactSolution {
    pub status: SolveStatus,
    pub value: f64,
    pub blocks: CompactBlocks,
    pub raw: PepSolution,
}

/// Assembles the compact PEP for `partition` (finite or limit).
pub fn build_compact_pep(trace: &AlgorithmTrace, partition: &EquivalencePartition, settings: &PepSettings) -> Result<CompactPep> {
    let singletons = partition.singletons();
    let symbolic = assemble_symbolic(trace, &singletons, settings, true)?;
    let mut problem = PepProblem::new();
    let layout = CompactLayout::new(&mut problem, partition, trace);
    compile_into(&layout, &mut problem, &symbolic)?;
    if partition.mode == PartitionMode::Limit {
        bound_singletons(&mut problem, &layout, settings);
    }
    Ok(CompactPep {
        problem,
        layout,
        value_names: trace.registry.value_names().to_vec(),
    })
}

/// Trace bound on the Gram block of each weightless singleton, per unit of
/// the largest initial bound.
pub const LIMIT_TRACE_BOUND: f64 = 1e3;

/// In the limit a singleton carries no consensus weight, so its iterates
/// have unbounded directions that leave the value unchanged. A generous
/// trace bound keeps the optimal face compact without moving the value.
fn bound_singletons(problem: &mut PepProblem, layout: &CompactLayout, settings: &PepSettings) {
    let p = layout.p;
    let scale = settings.initial.iter().map(|c| c.bound).fold(1.0, f64::max);
    let bound = LIMIT_TRACE_BOUND;
    for u in 0..layout.partition.class_count() {
        if !layout.partition.is_singleton(u) {
            continue;
        }
        let mut affine = Affine {
            constant: -bound * scale,
            ..Affine::default()
        };
        for a in 0..p {
            let mut e = vec![0.0; layout.partition.class_count() * p];
            e[u * p + a] = 1.0;
            if let Some(t) = problem.quad(layout.t_block, &e, &e, 1.0) {
                affine.quad.push(t);
            }
        }
        problem.constraints.push(ModelConstraint {
            label: format!("limit-trace[{}]", layout.partition.classes[u].label),
            affine,
            rel: Relation::Le,
        });
    }
}

/// Compact PEP in the many-agent limit with the given class proportions
/// (`None` for singletons).
pub fn assemble_limit_pep(trace: &AlgorithmTrace, proportions: &[Option<f64>], settings: &PepSettings) -> Result<CompactPep> {
    build_compact_pep(trace, &EquivalencePartition::limit(proportions)?, settings)
}

impl CompactPep {
    /// Agent-count dependent coefficients present in the compiled data.
    pub fn count_usage(&self) -> Vec<CountUsage> {
        self.layout.count_usage()
    }

    pub fn solve(&self, opts: &SolverOptions) -> Result<CompactSolution> {
        let raw = solve_problem(&self.problem, opts)?;
        let blocks = self.extract(&raw.blocks, &raw.free);
        Ok(CompactSolution {
            status: raw.status,
            value: raw.value,
            blocks,
            raw,
        })
    }

    /// Symmetrized blocks from values of `T`, `D_u` and the free variables.
    pub fn extract(&self, x: &[DMatrix<f64>], free: &[f64]) -> CompactBlocks {
        let l = &self.layout;
        let p = l.p;
        let u_count = l.partition.class_count();
        let t = &x[l.t_block];
        let tb = |u: usize, v: usize| t.view((u * p, v * p), (p, p)).into_owned();
        let mut ga = Vec::new();
        let mut gr = Vec::new();
        for u in 0..u_count {
            let tuu = tb(u, u);
            match l.d_blocks[u] {
                None => {
                    ga.push(tuu);
                    gr.push(None);
                }
                Some(d) => {
                    let kappa = l.partition.kappa(u).unwrap_or(0.0);
                    ga.push(&tuu + &x[d]);
                    gr.push(Some(&tuu - &x[d] * kappa));
                }
            }
        }
        let mut gc = BTreeMap::new();
        for u in 0..u_count {
            for v in 0..u_count {
                if u != v {
                    gc.insert((u, v), tb(u, v));
                }
            }
        }
        let fa = l
            .values
            .iter()
            .map(|vals| DVector::from_iterator(vals.len(), vals.iter().map(|f| f.map_or(0.0, |i| free[i]))))
            .collect();
        CompactBlocks { fa, ga, gr, gc }
    }
}
