//! SDP model produced by the PEP builders.
//!
//! Each PSD variable carries a dictionary of coefficient vectors; a quadratic
//! term `coef * v_a^T X v_b` refers to two dictionary entries. Constraint
//! functionals stay in this factored form all the way to the solver.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};

use crate::error::{PepError, Result};
use crate::expr::{Constraint, MatrixConstraint, Relation, ScalarExpr};

#[derive(Clone, Debug, PartialEq)]
pub struct PsdVar {
    pub name: String,
    pub dim: usize,
    pub vectors: Vec<DVector<f64>>,
    lookup: HashMap<Vec<u64>, usize>,
}

impl PsdVar {
    fn key(v: &[f64]) -> Vec<u64> {
        v.iter().map(|x| if *x == 0.0 { 0 } else { x.to_bits() }).collect()
    }

    /// Index of `v` in the dictionary, inserting it if new.
    pub fn intern(&mut self, v: &[f64]) -> usize {
        debug_assert_eq!(v.len(), self.dim);
        let key = Self::key(v);
        if let Some(&i) = self.lookup.get(&key) {
            return i;
        }
        let i = self.vectors.len();
        self.vectors.push(DVector::from_column_slice(v));
        self.lookup.insert(key, i);
        i
    }
}

/// `coef * v_a^T X_block v_b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadTerm {
    pub block: usize,
    pub a: usize,
    pub b: usize,
    pub coef: f64,
}

/// Affine functional of the PSD variables and the free (function value) variables.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Affine {
    pub quad: Vec<QuadTerm>,
    pub free: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn add_scaled(&mut self, other: &Affine, s: f64) {
        self.quad.extend(other.quad.iter().map(|t| QuadTerm { coef: t.coef * s, ..*t }));
        self.free.extend(other.free.iter().map(|&(i, c)| (i, c * s)));
        self.constant += other.constant * s;
    }

    /// Merges duplicate terms (quadratic terms keyed by unordered vector pairs)
    /// and drops zeros.
    pub fn simplify(&mut self) {
        let mut q: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
        for t in &self.quad {
            let (a, b) = if t.a <= t.b { (t.a, t.b) } else { (t.b, t.a) };
            *q.entry((t.block, a, b)).or_insert(0.0) += t.coef;
        }
        self.quad = q
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|((block, a, b), coef)| QuadTerm { block, a, b, coef })
            .collect();
        let mut f: BTreeMap<usize, f64> = BTreeMap::new();
        for &(i, c) in &self.free {
            *f.entry(i).or_insert(0.0) += c;
        }
        self.free = f.into_iter().filter(|(_, c)| *c != 0.0).collect();
    }

    pub fn is_constant(&self) -> bool {
        self.quad.is_empty() && self.free.is_empty()
    }

    pub fn evaluate(&self, blocks: &[PsdVar], x: &[DMatrix<f64>], free: &[f64]) -> f64 {
        let mut v = self.constant;
        for t in &self.quad {
            let va = &blocks[t.block].vectors[t.a];
            let vb = &blocks[t.block].vectors[t.b];
            v += t.coef * va.dot(&(&x[t.block] * vb));
        }
        for &(i, c) in &self.free {
            v += c * free[i];
        }
        v
    }

    /// Dense symmetric coefficient matrix of this functional on one block.
    pub fn block_matrix(&self, blocks: &[PsdVar], block: usize) -> DMatrix<f64> {
        let n = blocks[block].dim;
        let mut m = DMatrix::zeros(n, n);
        for t in self.quad.iter().filter(|t| t.block == block) {
            let va = &blocks[block].vectors[t.a];
            let vb = &blocks[block].vectors[t.b];
            let outer = va * vb.transpose();
            m += (&outer + outer.transpose()) * (0.5 * t.coef);
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConstraint {
    pub label: String,
    pub affine: Affine,
    pub rel: Relation,
}

/// Symmetric matrix of affine functionals required to be negative semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelLmi {
    pub label: String,
    pub dim: usize,
    /// Upper triangle, row-major: `(0,0), (0,1), ..., (1,1), ...`.
    pub upper: Vec<Affine>,
}

impl ModelLmi {
    pub fn entry(&self, i: usize, j: usize) -> &Affine {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        &self.upper[i * self.dim - i * (i + 1) / 2 + j]
    }

    pub fn evaluate(&self, blocks: &[PsdVar], x: &[DMatrix<f64>], free: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.entry(i, j).evaluate(blocks, x, free))
    }
}

/// An SDP: maximize `objective` over PSD variables and free values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PepProblem {
    pub blocks: Vec<PsdVar>,
    pub free: Vec<String>,
    pub objective: Affine,
    pub constraints: Vec<ModelConstraint>,
    pub lmis: Vec<ModelLmi>,
}

impl PepProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_block(&mut self, name: &str, dim: usize) -> usize {
        self.blocks.push(PsdVar {
            name: name.to_string(),
            dim,
            vectors: Vec::new(),
            lookup: HashMap::new(),
        });
        self.blocks.len() - 1
    }

    pub fn add_free(&mut self, name: &str) -> usize {
        self.free.push(name.to_string());
        self.free.len() - 1
    }

    /// Term `coef * a^T X_block b`; zero vectors yield no term.
    pub fn quad(&mut self, block: usize, a: &[f64], b: &[f64], coef: f64) -> Option<QuadTerm> {
        if coef == 0.0 || a.iter().all(|x| *x == 0.0) || b.iter().all(|x| *x == 0.0) {
            return None;
        }
        let ia = self.blocks[block].intern(a);
        let ib = self.blocks[block].intern(b);
        Some(QuadTerm { block, a: ia, b: ib, coef })
    }

    pub fn block_index(&self, name: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.name == name)
    }

    /// Total number of scalar constraints plus LMI sizes; a size summary.
    pub fn summary(&self) -> String {
        let dims: Vec<String> = self.blocks.iter().map(|b| format!("{}:{}", b.name, b.dim)).collect();
        let lmis: Vec<String> = self.lmis.iter().map(|l| l.dim.to_string()).collect();
        format!(
            "blocks [{}], free {}, constraints {}, lmis [{}]",
            dims.join(", "),
            self.free.len(),
            self.constraints.len(),
            lmis.join(", ")
        )
    }

    /// Largest violation of constraints and LMIs at a point (PSD-ness of the
    /// blocks themselves is not checked).
    pub fn max_violation(&self, x: &[DMatrix<f64>], free: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.constraints {
            let v = c.affine.evaluate(&self.blocks, x, free);
            let viol = match c.rel {
                Relation::Eq => v.abs(),
                Relation::Le => v.max(0.0),
                Relation::Ge => (-v).max(0.0),
            };
            worst = worst.max(viol);
        }
        for l in &self.lmis {
            let m = l.evaluate(&self.blocks, x, free);
            let top = m.symmetric_eigenvalues().max();
            worst = worst.max(top.max(0.0));
        }
        worst
    }
}

/// Maps symbolic Gram products and values of a [`ScalarExpr`] onto model variables.
pub trait GramLayout {
    /// Number of equivalence classes the layout understands.
    fn class_count(&self) -> usize;

    /// Compiles `expr` into one affine functional per instantiation. Compact
    /// layouts return exactly one; agent layouts return one per assignment of
    /// member agents to the classes the expression mentions.
    fn compile(&self, problem: &mut PepProblem, expr: &ScalarExpr) -> Result<Vec<(String, Affine)>>;
}

/// Layout-independent description of a PEP: objective, scalar constraints and
/// negative semidefinite matrix constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolicPep {
    pub objective: ScalarExpr,
    pub constraints: Vec<Constraint>,
    pub lmis: Vec<MatrixConstraint>,
}

/// Compiles a symbolic PEP into `problem` using `layout`.
pub fn compile_into(layout: &dyn GramLayout, problem: &mut PepProblem, pep: &SymbolicPep) -> Result<()> {
    let mut objective = single(layout, problem, &pep.objective, "objective")?;
    objective.simplify();
    problem.objective = objective;
    for c in &pep.constraints {
        for (suffix, mut affine) in layout.compile(problem, &c.expr)? {
            affine.simplify();
            problem.constraints.push(ModelConstraint {
                label: format!("{}{}", c.label, suffix),
                affine,
                rel: c.rel,
            });
        }
    }
    for l in &pep.lmis {
        let mut upper = Vec::with_capacity(l.dim * (l.dim + 1) / 2);
        for i in 0..l.dim {
            for j in i..l.dim {
                let mut e = single(layout, problem, l.entry(i, j), &l.label)?;
                e.simplify();
                upper.push(e);
            }
        }
        problem.lmis.push(ModelLmi {
            label: l.label.clone(),
            dim: l.dim,
            upper,
        });
    }
    Ok(())
}

fn single(layout: &dyn GramLayout, problem: &mut PepProblem, expr: &ScalarExpr, what: &str) -> Result<Affine> {
    let mut v = layout.compile(problem, expr)?;
    if v.len() != 1 {
        return Err(PepError::InvalidMetric(format!(
            "`{what}` must compile to a single functional, got {} instantiations",
            v.len()
        )));
    }
    Ok(v.pop().unwrap().1)
}
