//! Symmetric averaging matrices with bounded non-principal spectrum, the convex
//! consensus relaxation used inside PEPs, and numeric a-posteriori checks.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{PepError, Result};
use crate::expr::{Constraint, MatrixConstraint, Pairing, Relation, ScalarExpr, VectorExpr};

/// Symmetric averaging matrices whose eigenvalues other than the one of `1`
/// lie in `[lam_minus, lam_plus]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixClass {
    pub lam_minus: f64,
    pub lam_plus: f64,
    pub symbol: String,
}

impl MatrixClass {
    pub fn new(lam_minus: f64, lam_plus: f64, symbol: &str) -> Result<Self> {
        if !(lam_minus > -1.0 && lam_plus < 1.0) {
            return Err(PepError::InvalidMatrixClass(format!(
                "spectral bounds [{lam_minus}, {lam_plus}] must lie in (-1, 1)"
            )));
        }
        if lam_minus > lam_plus {
            return Err(PepError::InvalidMatrixClass(format!("lam_minus {lam_minus} > lam_plus {lam_plus}")));
        }
        Ok(Self {
            lam_minus,
            lam_plus,
            symbol: symbol.to_string(),
        })
    }

    /// Symmetric interval `[-lam, lam]`.
    pub fn symmetric(lam: f64, symbol: &str) -> Result<Self> {
        Self::new(-lam, lam, symbol)
    }

    /// Largest spectral magnitude `max(|lam_minus|, |lam_plus|)`.
    pub fn spectral_radius(&self) -> f64 {
        self.lam_minus.abs().max(self.lam_plus.abs())
    }
}

/// Consensus steps `y^k = W x^k` sharing one matrix symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusSet {
    pub symbol: String,
    pub pairs: Vec<(VectorExpr, VectorExpr)>,
}

/// Constraints emitted for one consensus set.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusConstraints {
    /// Averages are preserved: `sum_k ||xbar^k - ybar^k||^2 = 0`.
    pub average: Constraint,
    /// Symmetrized `(Y - lam_minus X)^T (Y - lam_plus X) <= 0` on centered parts.
    pub lmi: MatrixConstraint,
    /// `<y^k, x^l> = <x^k, y^l>` on centered parts for `k < l`.
    pub symmetry: Vec<Constraint>,
}

pub fn consensus_constraints(set: &ConsensusSet, class: &MatrixClass) -> Result<ConsensusConstraints> {
    if set.pairs.is_empty() {
        return Err(PepError::InvalidMatrixClass(format!("consensus set `{}` is empty", set.symbol)));
    }
    let k = set.pairs.len();
    let mut average = ScalarExpr::zero();
    for (x, y) in &set.pairs {
        let d = x - y;
        if !d.is_zero() {
            average += ScalarExpr::square(Pairing::Total, &d);
        }
    }
    let mut entries = Vec::with_capacity(k * k);
    let shifted: Vec<(VectorExpr, VectorExpr)> = set
        .pairs
        .iter()
        .map(|(x, y)| (y - &x.scale(class.lam_minus), y - &x.scale(class.lam_plus)))
        .collect();
    for i in 0..k {
        for j in 0..k {
            let e = 0.5 * ScalarExpr::product(Pairing::Centered, &shifted[i].0, &shifted[j].1)
                + 0.5 * ScalarExpr::product(Pairing::Centered, &shifted[j].0, &shifted[i].1);
            entries.push(e);
        }
    }
    let mut symmetry = Vec::new();
    for i in 0..k {
        for j in (i + 1)..k {
            let (xi, yi) = &set.pairs[i];
            let (xj, yj) = &set.pairs[j];
            symmetry.push(Constraint::new(
                format!("cons-sym[{}]:{i},{j}", set.symbol),
                ScalarExpr::product(Pairing::Centered, yi, xj) - ScalarExpr::product(Pairing::Centered, xi, yj),
                Relation::Eq,
            ));
        }
    }
    Ok(ConsensusConstraints {
        average: Constraint::new(format!("cons-avg[{}]", set.symbol), average, Relation::Eq),
        lmi: MatrixConstraint {
            label: format!("cons-lmi[{}]", set.symbol),
            dim: k,
            entries,
        },
        symmetry,
    })
}

/// Orthonormal basis of the complement of `1` in `R^n`, as an `n x (n-1)` matrix.
pub fn consensus_complement(n: usize) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(n, n - 1);
    // Helmert basis.
    for j in 0..n - 1 {
        let k = (j + 1) as f64;
        let norm = (k * (k + 1.0)).sqrt();
        for i in 0..=j {
            q[(i, j)] = 1.0 / norm;
        }
        q[(j + 1, j)] = -k / norm;
    }
    q
}

/// Fitted averaging matrix with its fit diagnostics.
#[derive(Clone, Debug)]
pub struct AveragingFit {
    pub w: DMatrix<f64>,
    /// Largest `||y^k - (W x I) x^k|| / max(||x^k||, ||y^k||, 1e-300)`.
    pub residual: f64,
    /// Eigenvalues of `W` on the complement of `1`, ascending.
    pub spectrum: Vec<f64>,
    pub feasible: bool,
}

fn as_agent_rows(v: &DVector<f64>, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |i, c| v[i * d + c])
}

fn project_spectrum(m: &DMatrix<f64>, lo: f64, hi: f64) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let clipped = eig.eigenvalues.map(|l| l.clamp(lo, hi));
    &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()
}

/// Looks for `W` in the class with `y^k = (W x I_d) x^k` for every pair.
///
/// Pairs are stacked agent-major vectors of length `n*d`. The fit minimizes the
/// squared residual over symmetric matrices with the prescribed spectrum on the
/// complement of `1` (accelerated projected gradient), starting from the
/// least-squares solution closest to the averaging projector; `tol` is the relative residual and eigenvalue tolerance.
pub fn recover_averaging_matrix(
    pairs: &[(DVector<f64>, DVector<f64>)],
    n: usize,
    class: &MatrixClass,
    tol: f64,
) -> Result<AveragingFit> {
    if n < 2 {
        return Err(PepError::DimensionMismatch { expected: 2, found: n });
    }
    let len = pairs.first().map(|p| p.0.len()).unwrap_or(n);
    if len % n != 0 {
        return Err(PepError::DimensionMismatch { expected: n, found: len });
    }
    let d = len / n;
    for (x, y) in pairs {
        if x.len() != len || y.len() != len {
            return Err(PepError::DimensionMismatch { expected: len, found: x.len().max(y.len()) });
        }
    }
    let q = consensus_complement(n);
    let ones = DVector::from_element(n, 1.0 / n as f64);
    let mut a_cols = Vec::new();
    let mut b_cols = Vec::new();
    let mut avg_gap: f64 = 0.0;
    let mut scales = Vec::new();
    for (x, y) in pairs {
        let xm = as_agent_rows(x, n, d);
        let ym = as_agent_rows(y, n, d);
        let gap = (xm.transpose() * &ones - ym.transpose() * &ones).norm();
        let scale = x.norm().max(y.norm()).max(1e-300);
        avg_gap = avg_gap.max(gap * (n as f64).sqrt() / scale);
        scales.push(scale);
        let qa = q.transpose() * xm;
        let qb = q.transpose() * ym;
        for c in 0..d {
            a_cols.push(qa.column(c).into_owned() / scale);
            b_cols.push(qb.column(c).into_owned() / scale);
        }
    }
    let m = n - 1;
    let a = DMatrix::from_columns(&a_cols);
    let b = DMatrix::from_columns(&b_cols);
    let mid = 0.0f64.clamp(class.lam_minus, class.lam_plus);

    // Least-squares start over symmetric matrices: unknowns are the upper triangle.
    let idx: Vec<(usize, usize)> = (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
    let cols = a.ncols();
    let target = &b - &a * mid;
    let mut sys = DMatrix::zeros(m * cols, idx.len());
    for (t, &(i, j)) in idx.iter().enumerate() {
        for c in 0..cols {
            sys[(i * cols + c, t)] += a[(j, c)];
            if i != j {
                sys[(j * cols + c, t)] += a[(i, c)];
            }
        }
    }
    let rhs = DVector::from_fn(m * cols, |r, _| target[(r / cols, r % cols)]);
    let mut w = DMatrix::from_diagonal_element(m, m, mid);
    if cols > 0 {
        let svd = sys.svd(true, true);
        if let Ok(sol) = svd.solve(&rhs, 1e-12) {
            for (t, &(i, j)) in idx.iter().enumerate() {
                w[(i, j)] += sol[t];
                if i != j {
                    w[(j, i)] += sol[t];
                }
            }
        }
    }
    w = project_spectrum(&w, class.lam_minus, class.lam_plus);

    let resid = |w: &DMatrix<f64>| (w * &a - &b).norm();
    let lip = (&a * a.transpose()).symmetric_eigenvalues().max().max(1e-300);
    let mut best = w.clone();
    let mut best_r = resid(&w);
    let mut z = w.clone();
    let mut t = 1.0f64;
    let stop = tol * 1e-2;
    for _ in 0..20_000 {
        if best_r <= stop || cols == 0 {
            break;
        }
        let grad = (&z * &a - &b) * a.transpose();
        let grad = (&grad + grad.transpose()) * 0.5;
        let next = project_spectrum(&(&z - grad / lip), class.lam_minus, class.lam_plus);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = &next + (&next - &w) * ((t - 1.0) / t_next);
        w = next;
        t = t_next;
        let r = resid(&w);
        if r < best_r {
            best_r = r;
            best = w.clone();
        }
    }
    let full = DMatrix::from_element(n, n, 1.0 / n as f64) + &q * &best * q.transpose();
    let spectrum: Vec<f64> = {
        let mut ev: Vec<f64> = best.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
        ev
    };
    // Residual per pair, relative to the pair scale.
    let mut residual: f64 = avg_gap;
    for ((x, y), s) in pairs.iter().zip(&scales) {
        let xm = as_agent_rows(x, n, d);
        let ym = as_agent_rows(y, n, d);
        residual = residual.max((&full * xm - ym).norm() / s);
    }
    let in_bounds = spectrum
        .iter()
        .all(|&l| l >= class.lam_minus - tol && l <= class.lam_plus + tol);
    Ok(AveragingFit {
        w: full,
        residual,
        spectrum,
        feasible: residual <= tol && in_bounds,
    })
}

/// Gram matrices of the non-convexity construction.
#[derive(Clone, Debug)]
pub struct NonconvexityFixture {
    pub x: DVector<f64>,
    pub y1: DVector<f64>,
    pub y2: DVector<f64>,
    pub w1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    /// `[x y]^T [x y]` with rows/columns ordered `x_1..x_n, y_1..y_n`.
    pub g1: DMatrix<f64>,
    pub g2: DMatrix<f64>,
    pub g3: DMatrix<f64>,
}

fn rank_one_averaging(n: usize, lam: f64) -> DMatrix<f64> {
    let nf = n as f64;
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            (1.0 + (nf - 1.0) * lam) / nf
        } else {
            (1.0 - lam) / nf
        }
    })
}

/// Two interpolable Gram matrices whose midpoint is not interpolable, for `d = 1`.
pub fn nonconvexity_fixture(n: usize, lam_minus: f64, lam_plus: f64) -> Result<NonconvexityFixture> {
    if n < 2 {
        return Err(PepError::InvalidMatrixClass("fixture needs n >= 2".into()));
    }
    if !(lam_minus < lam_plus) {
        return Err(PepError::InvalidMatrixClass(format!(
            "degenerate fixture: need lam_minus < lam_plus, got {lam_minus} and {lam_plus}"
        )));
    }
    let mut x = DVector::zeros(n);
    x[0] = n as f64;
    let w1 = rank_one_averaging(n, lam_minus);
    let w2 = rank_one_averaging(n, lam_plus);
    let y1 = &w1 * &x;
    let y2 = &w2 * &x;
    let gram = |y: &DVector<f64>| {
        let mut v = DVector::zeros(2 * n);
        v.rows_mut(0, n).copy_from(&x);
        v.rows_mut(n, n).copy_from(y);
        &v * v.transpose()
    };
    let g1 = gram(&y1);
    let g2 = gram(&y2);
    let g3 = (&g1 + &g2) * 0.5;
    Ok(NonconvexityFixture { x, y1, y2, w1, w2, g1, g2, g3 })
}

/// Factor `G = P^T P` keeping eigenvalues above `cutoff`; returns `P` (`d x dim`).
pub fn gram_factor(g: &DMatrix<f64>, cutoff: f64) -> DMatrix<f64> {
    let sym = (g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let keep: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] > cutoff).collect();
    let mut p = DMatrix::zeros(keep.len(), g.nrows());
    for (r, &i) in keep.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        for c in 0..g.nrows() {
            p[(r, c)] = s * eig.eigenvectors[(c, i)];
        }
    }
    p
}

/// Splits the factor of a fixture-style Gram (`x_1..x_n, y_1..y_n` columns,
/// `d`-dimensional) into agent-major stacked `(x, y)` vectors.
pub fn fixture_pair(g: &DMatrix<f64>, n: usize, cutoff: f64) -> (DVector<f64>, DVector<f64>) {
    let p = gram_factor(g, cutoff);
    let d = p.nrows();
    let x = DVector::from_fn(n * d, |r, _| p[(r % d, r / d)]);
    let y = DVector::from_fn(n * d, |r, _| p[(r % d, n + r / d)]);
    (x, y)
}

/// Checks that `m` (`nd x nd`) fixes the consensus subspace, is symmetric, and
/// has the remaining spectrum in `(-1, 1)`; then returns `m^steps x0`.
pub fn simulate_mcl_consensus(m: &DMatrix<f64>, n: usize, x0: &DVector<f64>, steps: usize) -> Result<DVector<f64>> {
    let nd = m.nrows();
    if m.ncols() != nd || x0.len() != nd || n == 0 || nd % n != 0 {
        return Err(PepError::DimensionMismatch { expected: nd, found: x0.len() });
    }
    let d = nd / n;
    let scale = m.norm().max(1.0);
    if (m - m.transpose()).norm() > 1e-10 * scale {
        return Err(PepError::InvalidMatrixClass("operator is not symmetric".into()));
    }
    let mut u = DMatrix::zeros(nd, d);
    for i in 0..n {
        for c in 0..d {
            u[(i * d + c, c)] = 1.0 / (n as f64).sqrt();
        }
    }
    if (m * &u - &u).norm() > 1e-10 * scale {
        return Err(PepError::InvalidMatrixClass("consensus subspace is not fixed".into()));
    }
    let q = consensus_complement(n).kronecker(&DMatrix::identity(d, d));
    let restricted = q.transpose() * m * &q;
    let spec = restricted.symmetric_eigenvalues();
    if spec.iter().any(|&l| l <= -1.0 || l >= 1.0) {
        return Err(PepError::InvalidMatrixClass(
            "eigenvalues off the consensus subspace must lie in (-1, 1)".into(),
        ));
    }
    let mut x = x0.clone();
    for _ in 0..steps {
        x = m * x;
    }
    Ok(x)
}
