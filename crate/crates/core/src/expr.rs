//! Symbolic vectors and scalars over a shared basis of per-agent leaf tags.
//!
//! Every agent owns one copy of each leaf tag (initial points, consensus outputs,
//! gradients). A [`VectorExpr`] is a coefficient vector over those tags and is the
//! same for every agent; a [`ScalarExpr`] combines Gram-type products of vector
//! expressions, function values and a constant.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::error::{PepError, Result};

/// Ordered set of leaf tags shared by all agents.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BasisRegistry {
    vectors: Vec<String>,
    values: Vec<String>,
    vector_index: HashMap<String, usize>,
    value_index: HashMap<String, usize>,
    pinned: BTreeSet<usize>,
}

impl BasisRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a vector leaf tag and returns its column.
    pub fn add_vector(&mut self, name: &str) -> Result<usize> {
        if self.vector_index.contains_key(name) {
            return Err(PepError::DuplicateTag(name.to_string()));
        }
        let idx = self.vectors.len();
        self.vectors.push(name.to_string());
        self.vector_index.insert(name.to_string(), idx);
        Ok(idx)
    }

    /// Registers a function-value tag.
    pub fn add_value(&mut self, name: &str) -> Result<usize> {
        if self.value_index.contains_key(name) {
            return Err(PepError::DuplicateTag(name.to_string()));
        }
        let idx = self.values.len();
        self.values.push(name.to_string());
        self.value_index.insert(name.to_string(), idx);
        Ok(idx)
    }

    /// Marks a value tag as identically zero (e.g. the value at the optimum).
    pub fn pin_value(&mut self, name: &str) -> Result<()> {
        let idx = self.value(name)?;
        self.pinned.insert(idx);
        Ok(())
    }

    pub fn is_pinned(&self, value: usize) -> bool {
        self.pinned.contains(&value)
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn value_dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector_names(&self) -> &[String] {
        &self.vectors
    }

    pub fn value_names(&self) -> &[String] {
        &self.values
    }

    pub fn vector(&self, name: &str) -> Result<usize> {
        self.vector_index
            .get(name)
            .copied()
            .ok_or_else(|| PepError::UnknownTag(name.to_string()))
    }

    pub fn value(&self, name: &str) -> Result<usize> {
        self.value_index
            .get(name)
            .copied()
            .ok_or_else(|| PepError::UnknownTag(name.to_string()))
    }

    /// Unit vector expression of a registered tag.
    pub fn unit(&self, name: &str) -> Result<VectorExpr> {
        Ok(VectorExpr::unit(self.dim(), self.vector(name)?))
    }
}

/// Linear combination of vector leaf tags.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorExpr {
    coeffs: Vec<f64>,
}

impl VectorExpr {
    pub fn zeros(dim: usize) -> Self {
        Self { coeffs: vec![0.0; dim] }
    }

    pub fn unit(dim: usize, index: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.coeffs[index] = 1.0;
        v
    }

    pub fn from_coeffs(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(PepError::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(self.zip(other, |a, b| a + b))
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(self.zip(other, |a, b| a - b))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// `Σ c_k v_k`; all vectors must share the dimension `dim`.
    pub fn lincomb(dim: usize, terms: &[(f64, &VectorExpr)]) -> Result<Self> {
        let mut out = Self::zeros(dim);
        for (c, v) in terms {
            out.check(v)?;
            for (o, x) in out.coeffs.iter_mut().zip(&v.coeffs) {
                *o += c * x;
            }
        }
        Ok(out)
    }

    /// Zero-extends to a larger basis.
    pub fn extended(&self, dim: usize) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(dim.max(self.dim()), 0.0);
        Self { coeffs }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

impl Add for &VectorExpr {
    type Output = VectorExpr;
    fn add(self, rhs: &VectorExpr) -> VectorExpr {
        self.try_add(rhs).expect("vector expression dimension mismatch")
    }
}

impl Sub for &VectorExpr {
    type Output = VectorExpr;
    fn sub(self, rhs: &VectorExpr) -> VectorExpr {
        self.try_sub(rhs).expect("vector expression dimension mismatch")
    }
}

impl Mul<&VectorExpr> for f64 {
    type Output = VectorExpr;
    fn mul(self, rhs: &VectorExpr) -> VectorExpr {
        rhs.scale(self)
    }
}

impl Neg for &VectorExpr {
    type Output = VectorExpr;
    fn neg(self) -> VectorExpr {
        self.scale(-1.0)
    }
}

/// Which Gram block a product of two vector expressions is read from.
///
/// Class indices refer to an equivalence partition. In the agent-dependent
/// formulation a class-indexed pairing is instantiated once per member agent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pairing {
    /// Same agent of class `u`: the block `Ga^u`.
    Local(usize),
    /// Two distinct agents from classes `u` and `v`: `Gr^u` when `u == v`, else `Gc^{uv}`.
    Cross(usize, usize),
    /// Agent average `(1/N) Σ_i <a_i, b_i>`.
    Mean,
    /// Product of agent averages `<ā, b̄>`.
    Total,
    /// Average centered product `(1/N) Σ_i <a_i - ā, b_i - b̄>`.
    Centered,
}

impl Pairing {
    pub fn is_symmetric(&self) -> bool {
        !matches!(self, Pairing::Cross(u, v) if u != v)
    }

    /// Classes referenced by this pairing.
    pub fn classes(&self) -> Vec<usize> {
        match *self {
            Pairing::Local(u) => vec![u],
            Pairing::Cross(u, v) if u == v => vec![u],
            Pairing::Cross(u, v) => vec![u, v],
            _ => Vec::new(),
        }
    }
}

/// Which function values a value term refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ValueScope {
    /// Value of an agent of class `u`.
    Local(usize),
    /// Average over all agents.
    Mean,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GramTerm {
    pub coef: f64,
    pub a: VectorExpr,
    pub b: VectorExpr,
    pub pairing: Pairing,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValueTerm {
    pub coef: f64,
    pub tag: usize,
    pub scope: ValueScope,
}

/// Affine combination of Gram products, function values and a constant.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScalarExpr {
    pub gram: Vec<GramTerm>,
    pub values: Vec<ValueTerm>,
    pub constant: f64,
}

/// Canonical coefficient of `(pairing, tag_a, tag_b)` in a [`ScalarExpr`].
pub type CanonicalKey = (Pairing, usize, usize);

impl ScalarExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            ..Self::default()
        }
    }

    /// `<a, b>` read from the block selected by `pairing`.
    pub fn product(pairing: Pairing, a: &VectorExpr, b: &VectorExpr) -> Self {
        Self {
            gram: vec![GramTerm {
                coef: 1.0,
                a: a.clone(),
                b: b.clone(),
                pairing,
            }],
            ..Self::default()
        }
    }

    /// `||a||^2` read from the block selected by `pairing`.
    pub fn square(pairing: Pairing, a: &VectorExpr) -> Self {
        Self::product(pairing, a, a)
    }

    pub fn value(scope: ValueScope, tag: usize) -> Self {
        Self {
            values: vec![ValueTerm {
                coef: 1.0,
                tag,
                scope,
            }],
            ..Self::default()
        }
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for t in &mut self.gram {
            t.coef *= s;
        }
        for t in &mut self.values {
            t.coef *= s;
        }
        self.constant *= s;
        self
    }

    /// Classes referenced by any term.
    pub fn classes(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for t in &self.gram {
            out.extend(t.pairing.classes());
        }
        for t in &self.values {
            if let ValueScope::Local(u) = t.scope {
                out.insert(u);
            }
        }
        out
    }

    /// Coefficients expanded over leaf-tag pairs, merged and with symmetric
    /// pairings stored on `tag_a <= tag_b`. Cross pairings are oriented so the
    /// smaller class comes first. Zero coefficients are dropped.
    pub fn canonical(&self) -> (BTreeMap<CanonicalKey, f64>, BTreeMap<(usize, ValueScope), f64>, f64) {
        let mut gram: BTreeMap<CanonicalKey, f64> = BTreeMap::new();
        for t in &self.gram {
            let (pairing, a, b) = match t.pairing {
                Pairing::Cross(u, v) if u > v => (Pairing::Cross(v, u), &t.b, &t.a),
                p => (p, &t.a, &t.b),
            };
            let sym = pairing.is_symmetric();
            for (i, &ai) in a.coeffs().iter().enumerate() {
                if ai == 0.0 {
                    continue;
                }
                for (j, &bj) in b.coeffs().iter().enumerate() {
                    if bj == 0.0 {
                        continue;
                    }
                    let key = if sym && j < i { (pairing, j, i) } else { (pairing, i, j) };
                    *gram.entry(key).or_insert(0.0) += t.coef * ai * bj;
                }
            }
        }
        gram.retain(|_, c| *c != 0.0);
        let mut values: BTreeMap<(usize, ValueScope), f64> = BTreeMap::new();
        for t in &self.values {
            *values.entry((t.tag, t.scope)).or_insert(0.0) += t.coef;
        }
        values.retain(|_, c| *c != 0.0);
        (gram, values, self.constant)
    }

    /// Equality of canonical forms up to an absolute tolerance.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        let (g1, v1, c1) = self.canonical();
        let (g2, v2, c2) = other.canonical();
        close_maps(&g1, &g2, tol) && close_maps(&v1, &v2, tol) && (c1 - c2).abs() <= tol
    }
}

fn close_maps<K: Ord>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>, tol: f64) -> bool {
    a.iter().all(|(k, x)| (x - b.get(k).copied().unwrap_or(0.0)).abs() <= tol)
        && b.iter().all(|(k, x)| (x - a.get(k).copied().unwrap_or(0.0)).abs() <= tol)
}

impl Add for ScalarExpr {
    type Output = ScalarExpr;
    fn add(mut self, rhs: ScalarExpr) -> ScalarExpr {
        self += rhs;
        self
    }
}

impl AddAssign for ScalarExpr {
    fn add_assign(&mut self, rhs: ScalarExpr) {
        self.gram.extend(rhs.gram);
        self.values.extend(rhs.values);
        self.constant += rhs.constant;
    }
}

impl Sub for ScalarExpr {
    type Output = ScalarExpr;
    fn sub(self, rhs: ScalarExpr) -> ScalarExpr {
        self + rhs.scaled(-1.0)
    }
}

impl Mul<ScalarExpr> for f64 {
    type Output = ScalarExpr;
    fn mul(self, rhs: ScalarExpr) -> ScalarExpr {
        rhs.scaled(self)
    }
}

impl Neg for ScalarExpr {
    type Output = ScalarExpr;
    fn neg(self) -> ScalarExpr {
        self.scaled(-1.0)
    }
}

/// Sense of a scalar constraint `expr (rel) 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

/// Labelled scalar constraint `expr (rel) 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub label: String,
    pub expr: ScalarExpr,
    pub rel: Relation,
}

impl Constraint {
    pub fn new(label: impl Into<String>, expr: ScalarExpr, rel: Relation) -> Self {
        Self {
            label: label.into(),
            expr,
            rel,
        }
    }
}

/// Symmetric matrix of scalar expressions constrained to be negative semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixConstraint {
    pub label: String,
    pub dim: usize,
    /// Row-major entries; only the upper triangle is read.
    pub entries: Vec<ScalarExpr>,
}

impl MatrixConstraint {
    pub fn entry(&self, i: usize, j: usize) -> &ScalarExpr {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        &self.entries[i * self.dim + j]
    }
}

impl fmt::Display for Pairing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pairing::Local(u) => write!(f, "local[{u}]"),
            Pairing::Cross(u, v) => write!(f, "cross[{u},{v}]"),
            Pairing::Mean => write!(f, "mean"),
            Pairing::Total => write!(f, "total"),
            Pairing::Centered => write!(f, "centered"),
        }
    }
}
