//! Conic programs in equality standard form, lowering from [`PepProblem`],
//! a primal-dual interior-point solver and SDPA-style export.
//!
//! Standard form: minimize `<C, X> + c_lp . x + c_free . u` subject to
//! `<A_i, X> + a_i . x + f_i . u = b_i`, with `X` block-diagonal PSD, `x >= 0`
//! and `u` free. PSD coefficients are kept as bilinear terms over a per-block
//! dictionary of vectors.

mod ipm;
mod reduce;
pub mod sdpa;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{PepError, Result};
use crate::expr::Relation;
use crate::model::{Affine, PepProblem, QuadTerm};

pub use ipm::solve_conic;

/// A PSD block and its coefficient-vector dictionary.
#[derive(Clone, Debug, PartialEq)]
pub struct ConicBlock {
    pub dim: usize,
    pub vectors: Vec<DVector<f64>>,
}

impl ConicBlock {
    /// Block whose dictionary is the canonical basis.
    pub fn unit(dim: usize) -> Self {
        Self {
            dim,
            vectors: (0..dim)
                .map(|i| {
                    let mut v = DVector::zeros(dim);
                    v[i] = 1.0;
                    v
                })
                .collect(),
        }
    }
}

/// One linear row; `psd` terms read `coef * v_a^T X_block v_b`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConicRow {
    pub psd: Vec<QuadTerm>,
    pub lp: Vec<(usize, f64)>,
    pub free: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConicProgram {
    pub blocks: Vec<ConicBlock>,
    pub lp_dim: usize,
    pub free_dim: usize,
    pub rows: Vec<ConicRow>,
    pub labels: Vec<String>,
    /// Minimized; its `rhs` is unused.
    pub objective: ConicRow,
    /// Reported value is `value_sign * (objective) + value_offset`.
    pub value_sign: f64,
    pub value_offset: f64,
    /// Set when lowering found a constant row that cannot hold.
    pub trivially_infeasible: Option<String>,
}

/// Coefficient of a row on `(block, i, j)` with `i <= j`; the matrix is
/// symmetric and the inner product is the full trace product.
pub type EntryMap = BTreeMap<(usize, usize, usize), f64>;

impl ConicProgram {
    /// Symmetric coefficient matrix entries of one row.
    pub fn psd_entries(&self, row: &ConicRow) -> EntryMap {
        let mut out = EntryMap::new();
        for t in &row.psd {
            let block = &self.blocks[t.block];
            let va = &block.vectors[t.a];
            let vb = &block.vectors[t.b];
            for i in 0..block.dim {
                for j in i..block.dim {
                    let v = 0.5 * t.coef * (va[i] * vb[j] + va[j] * vb[i]);
                    if v != 0.0 {
                        *out.entry((t.block, i, j)).or_insert(0.0) += v;
                    }
                }
            }
        }
        out.retain(|_, v| *v != 0.0);
        out
    }

    /// Rebuilds a row from entry form over unit dictionaries.
    pub fn row_from_entries(entries: &EntryMap, lp: Vec<(usize, f64)>, free: Vec<(usize, f64)>, rhs: f64) -> ConicRow {
        let psd = entries
            .iter()
            .map(|(&(block, i, j), &v)| QuadTerm {
                block,
                a: i,
                b: j,
                coef: if i == j { v } else { 2.0 * v },
            })
            .collect();
        ConicRow { psd, lp, free, rhs }
    }

    pub fn psd_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.dim).collect()
    }

    /// Evaluates a row's left-hand side.
    pub fn row_value(&self, row: &ConicRow, x: &[DMatrix<f64>], x_lp: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let mut v = 0.0;
        for t in &row.psd {
            let b = &self.blocks[t.block];
            v += t.coef * b.vectors[t.a].dot(&(&x[t.block] * &b.vectors[t.b]));
        }
        for &(i, c) in &row.lp {
            v += c * x_lp[i];
        }
        for &(i, c) in &row.free {
            v += c * u[i];
        }
        v
    }
}

/// Mapping from a lowered program back to the model variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Lowering {
    pub program: ConicProgram,
    /// Conic block of each model PSD variable.
    pub model_blocks: Vec<usize>,
    /// Slack block of each LMI (`None` for 1x1 LMIs lowered to inequalities).
    pub lmi_blocks: Vec<Option<usize>>,
}

fn row_from_affine(affine: &Affine) -> ConicRow {
    ConicRow {
        psd: affine.quad.clone(),
        lp: Vec::new(),
        free: affine.free.clone(),
        rhs: -affine.constant,
    }
}

/// Lowers a maximization PEP to standard form: inequalities get nonnegative
/// slacks, LMIs `M <= 0` become `M + S = 0` with a PSD slack `S`.
pub fn lower(problem: &PepProblem) -> Result<Lowering> {
    let mut prog = ConicProgram {
        value_sign: -1.0,
        value_offset: problem.objective.constant,
        free_dim: problem.free.len(),
        ..Default::default()
    };
    for b in &problem.blocks {
        prog.blocks.push(ConicBlock {
            dim: b.dim,
            vectors: b.vectors.clone(),
        });
    }
    let model_blocks: Vec<usize> = (0..problem.blocks.len()).collect();
    let mut obj = row_from_affine(&problem.objective);
    for t in &mut obj.psd {
        t.coef = -t.coef;
    }
    for f in &mut obj.free {
        f.1 = -f.1;
    }
    obj.rhs = 0.0;
    prog.objective = obj;

    let push = |prog: &mut ConicProgram, label: String, affine: &Affine, rel: Relation| {
        if affine.is_constant() {
            let ok = match rel {
                Relation::Eq => affine.constant.abs() <= 1e-12,
                Relation::Le => affine.constant <= 1e-12,
                Relation::Ge => affine.constant >= -1e-12,
            };
            if !ok && prog.trivially_infeasible.is_none() {
                prog.trivially_infeasible = Some(label);
            }
            return;
        }
        let mut row = row_from_affine(affine);
        match rel {
            Relation::Eq => {}
            Relation::Le => {
                row.lp.push((prog.lp_dim, 1.0));
                prog.lp_dim += 1;
            }
            Relation::Ge => {
                row.lp.push((prog.lp_dim, -1.0));
                prog.lp_dim += 1;
            }
        }
        prog.rows.push(row);
        prog.labels.push(label);
    };
    for c in &problem.constraints {
        push(&mut prog, c.label.clone(), &c.affine, c.rel);
    }
    let mut lmi_blocks = Vec::new();
    for l in &problem.lmis {
        if l.dim == 1 {
            push(&mut prog, l.label.clone(), l.entry(0, 0), Relation::Le);
            lmi_blocks.push(None);
            continue;
        }
        let block = prog.blocks.len();
        prog.blocks.push(ConicBlock::unit(l.dim));
        lmi_blocks.push(Some(block));
        for i in 0..l.dim {
            for j in i..l.dim {
                let mut row = row_from_affine(l.entry(i, j));
                row.psd.push(QuadTerm {
                    block,
                    a: i,
                    b: j,
                    coef: 1.0,
                });
                prog.rows.push(row);
                prog.labels.push(format!("{}[{i},{j}]", l.label));
            }
        }
    }
    for row in &prog.rows {
        for t in &row.psd {
            if t.block >= prog.blocks.len() || t.a >= prog.blocks[t.block].vectors.len() {
                return Err(PepError::Solver("row references an undeclared block".into()));
            }
        }
    }
    Ok(Lowering {
        program: prog,
        model_blocks,
        lmi_blocks,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalTrouble,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::NumericalTrouble => "numerical_trouble",
        }
    }
}

/// Environment variable overriding the default solver tolerance.
pub const TOL_ENV: &str = "PEPNET_SOLVER_TOL";

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    /// Relative primal and dual infeasibility target.
    pub tol_feas: f64,
    /// Relative duality gap target.
    pub tol_gap: f64,
    /// Residual level below which a stalled run is still reported optimal.
    pub tol_accept: f64,
    pub max_iter: usize,
    /// Removes faces forced by equalities `<A, X_b> = 0` with semidefinite `A`.
    pub facial_reduction: bool,
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        let mut o = Self {
            tol_feas: 1e-8,
            tol_gap: 1e-7,
            tol_accept: 1e-5,
            max_iter: 150,
            facial_reduction: false,
            verbose: false,
        };
        if let Some(t) = std::env::var(TOL_ENV).ok().and_then(|s| s.trim().parse::<f64>().ok()) {
            if t > 0.0 {
                o = o.with_tolerance(t);
            }
        }
        o
    }
}

impl SolverOptions {
    /// Sets both the feasibility and the gap targets.
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol_feas = tol;
        self.tol_gap = tol;
        self.tol_accept = self.tol_accept.max(tol);
        self
    }

    pub fn with_facial_reduction(mut self, on: bool) -> Self {
        self.facial_reduction = on;
        self
    }
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub status: SolveStatus,
    /// Minimized objective `<C, X> + ...` of the standard form.
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub x: Vec<DMatrix<f64>>,
    pub x_lp: DVector<f64>,
    pub u: DVector<f64>,
    pub y: DVector<f64>,
    pub iterations: usize,
    /// Relative primal infeasibility, dual infeasibility and gap at exit.
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub gap: f64,
    /// Whether the requested tolerances (not only the acceptance level) were met.
    pub reached_tolerance: bool,
}

impl ConicSolution {
    pub fn value(&self, program: &ConicProgram) -> f64 {
        program.value_sign * self.primal_objective + program.value_offset
    }
}

/// Solution of a [`PepProblem`] mapped back to its variables.
#[derive(Clone, Debug)]
pub struct PepSolution {
    pub status: SolveStatus,
    /// Maximized objective.
    pub value: f64,
    /// Value of the dual problem, an upper bound when dual feasible.
    pub dual_value: f64,
    pub blocks: Vec<DMatrix<f64>>,
    pub free: Vec<f64>,
    pub iterations: usize,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub gap: f64,
    pub reached_tolerance: bool,
    /// Largest constraint violation re-evaluated on the model.
    pub model_violation: f64,
}

/// Lowers and solves a maximization PEP.
pub fn solve_problem(problem: &PepProblem, opts: &SolverOptions) -> Result<PepSolution> {
    let lowering = lower(problem)?;
    let prog = &lowering.program;
    let sol = solve_conic(prog, opts);
    let blocks: Vec<DMatrix<f64>> = lowering.model_blocks.iter().map(|&b| sol.x[b].clone()).collect();
    let free: Vec<f64> = sol.u.iter().copied().collect();
    let model_violation = if sol.x.is_empty() && !problem.blocks.is_empty() {
        f64::INFINITY
    } else {
        problem.max_violation(&blocks, &free)
    };
    Ok(PepSolution {
        status: sol.status,
        value: sol.value(prog),
        dual_value: prog.value_sign * sol.dual_objective + prog.value_offset,
        blocks,
        free,
        iterations: sol.iterations,
        primal_infeasibility: sol.primal_infeasibility,
        dual_infeasibility: sol.dual_infeasibility,
        gap: sol.gap,
        reached_tolerance: sol.reached_tolerance,
        model_violation,
    })
}
