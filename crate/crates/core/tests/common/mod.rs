//! Independent numeric checks shared by the property suites and the
//! acceptance run: explicit evaluation of symbolic expressions on agent
//! data, random instance generators, and dense PSD tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use pepnet::compact::{all_psd, expand_solution, psd_reformulation, CompactBlocks, EquivalencePartition};
use pepnet::expr::{Pairing, ScalarExpr, ValueScope, VectorExpr};
use pepnet::function_class::{interpolation_constraints, FunctionClass, Triplet};
use pepnet::matrix_class::{consensus_constraints, ConsensusSet, MatrixClass};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One agent: columns of `p` are the actual vectors of the basis elements,
/// `f` holds one function value per value tag.
#[derive(Clone, Debug)]
pub struct Agent {
    pub p: DMatrix<f64>,
    pub f: DVector<f64>,
}

impl Agent {
    fn vec(&self, a: &VectorExpr) -> DVector<f64> {
        &self.p * DVector::from_column_slice(a.coeffs())
    }
}

/// Evaluates `expr` directly from the definitions of the pairings.
/// `local[u]` names the agent standing for class `u`.
pub fn eval_expr(expr: &ScalarExpr, agents: &[Agent], local: &[usize]) -> f64 {
    let n = agents.len() as f64;
    let mean_vec = |a: &VectorExpr| agents.iter().map(|ag| ag.vec(a)).fold(DVector::zeros(agents[0].p.nrows()), |s, v| s + v) / n;
    let mut total = expr.constant;
    for t in &expr.gram {
        let v = match t.pairing {
            Pairing::Local(u) => {
                let ag = &agents[local[u]];
                ag.vec(&t.a).dot(&ag.vec(&t.b))
            }
            Pairing::Cross(u, v) => agents[local[u]].vec(&t.a).dot(&agents[local[v]].vec(&t.b)),
            Pairing::Mean => agents.iter().map(|ag| ag.vec(&t.a).dot(&ag.vec(&t.b))).sum::<f64>() / n,
            Pairing::Total => mean_vec(&t.a).dot(&mean_vec(&t.b)),
            Pairing::Centered => {
                let (ma, mb) = (mean_vec(&t.a), mean_vec(&t.b));
                agents.iter().map(|ag| (ag.vec(&t.a) - &ma).dot(&(ag.vec(&t.b) - &mb))).sum::<f64>() / n
            }
        };
        total += t.coef * v;
    }
    for v in &expr.values {
        let x = match v.scope {
            ValueScope::Local(u) => agents[local[u]].f[v.tag],
            ValueScope::Mean => agents.iter().map(|ag| ag.f[v.tag]).sum::<f64>() / n,
        };
        total += v.coef * x;
    }
    total
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    random_matrix(rng, d, d).qr().q()
}

/// Smallest eigenvalue of the symmetric part.
pub fn min_eig(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    ((m + m.transpose()) * 0.5).symmetric_eigenvalues().min()
}

/// Evaluates every interpolation inequality for a random quadratic with
/// curvature in `[mu, L]` sampled at `m` random points; returns the smallest slack.
pub fn quadratic_interpolation_slack(rng: &mut ChaCha8Rng, fc: &FunctionClass, d: usize, m: usize) -> f64 {
    let q = random_orthogonal(rng, d);
    let hi = if fc.l.is_finite() { fc.l } else { fc.mu + 10.0 };
    let eig = DVector::from_fn(d, |_, _| rng.gen_range(fc.mu..=hi));
    let a = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    let b = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
    let c: f64 = rng.gen_range(-1.0..1.0);
    let dim = 2 * m;
    let mut p = DMatrix::zeros(d, dim);
    let mut f = DVector::zeros(m);
    let mut triplets = Vec::new();
    for k in 0..m {
        let x = DVector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0));
        let g = &a * &x + &b;
        f[k] = 0.5 * x.dot(&(&a * &x)) + b.dot(&x) + c;
        p.set_column(2 * k, &x);
        p.set_column(2 * k + 1, &g);
        triplets.push(Triplet {
            label: format!("p{k}"),
            x: VectorExpr::unit(dim, 2 * k),
            g: VectorExpr::unit(dim, 2 * k + 1),
            f: k,
        });
    }
    let cons = interpolation_constraints(&triplets, fc, 0);
    assert_eq!(cons.len(), m * (m - 1));
    let agent = [Agent { p, f }];
    cons.iter().map(|c| eval_expr(&c.expr, &agent, &[0])).fold(f64::INFINITY, f64::min)
}

/// Symmetric averaging matrix with the given non-principal spectrum, built
/// from a random orthonormal complement of `1`.
pub fn random_averaging(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let mut basis = DMatrix::zeros(n, n);
    basis.set_column(0, &DVector::from_element(n, 1.0));
    for j in 1..n {
        basis.set_column(j, &DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)));
    }
    let q = basis.qr().q();
    let mut lam = DVector::zeros(n);
    lam[0] = 1.0;
    for j in 1..n {
        lam[j] = rng.gen_range(lo..=hi);
    }
    &q * DMatrix::from_diagonal(&lam) * q.transpose()
}

/// Residuals of the consensus constraints on a random admissible `(W, X)`:
/// `(|average|, max |symmetry|, largest eigenvalue of the LMI)`.
pub fn consensus_residuals(rng: &mut ChaCha8Rng) -> (f64, f64, f64) {
    let n = rng.gen_range(2..=6);
    let d = rng.gen_range(1..=3);
    let k = rng.gen_range(1..=4);
    let lo: f64 = rng.gen_range(-0.9..0.8);
    let hi: f64 = rng.gen_range(lo..0.95);
    let class = MatrixClass::new(lo, hi, "W").unwrap();
    let w = random_averaging(rng, n, lo, hi);
    let dim = 2 * k;
    let mut agents: Vec<Agent> = (0..n).map(|_| Agent { p: DMatrix::zeros(d, dim), f: DVector::zeros(0) }).collect();
    let mut pairs = Vec::new();
    for s in 0..k {
        let x = random_matrix(rng, n, d);
        let y = &w * &x;
        for (i, ag) in agents.iter_mut().enumerate() {
            ag.p.set_column(2 * s, &x.row(i).transpose());
            ag.p.set_column(2 * s + 1, &y.row(i).transpose());
        }
        pairs.push((VectorExpr::unit(dim, 2 * s), VectorExpr::unit(dim, 2 * s + 1)));
    }
    let set = ConsensusSet { symbol: "W".into(), pairs };
    let cons = consensus_constraints(&set, &class).unwrap();
    let avg = eval_expr(&cons.average.expr, &agents, &[]).abs();
    let sym = cons.symmetry.iter().map(|c| eval_expr(&c.expr, &agents, &[]).abs()).fold(0.0, f64::max);
    let lmi = DMatrix::from_fn(k, k, |i, j| eval_expr(cons.lmi.entry(i, j), &agents, &[]));
    let top = -min_eig(&(-lmi));
    (avg, sym, top)
}

/// Random compact blocks for classes of the given sizes and block size `p`.
/// Roughly half of the draws give a PSD expansion.
pub fn random_blocks(rng: &mut ChaCha8Rng, sizes: &[usize], p: usize) -> CompactBlocks {
    let u_count = sizes.len();
    let mut ga = Vec::new();
    let mut gr = Vec::new();
    for &s in sizes {
        let m = random_matrix(rng, p, p);
        let a = &m * m.transpose() + DMatrix::identity(p, p) * rng.gen_range(0.0..0.3);
        let c: f64 = rng.gen_range(-0.6..1.0);
        let e = random_matrix(rng, p, p);
        let e = (&e + e.transpose()) * rng.gen_range(0.0..0.4);
        gr.push((s > 1).then(|| &a * c + e));
        ga.push(a);
    }
    let mut gc = BTreeMap::new();
    for u in 0..u_count {
        for v in (u + 1)..u_count {
            let b = random_matrix(rng, p, p) * rng.gen_range(0.0..0.8);
            gc.insert((v, u), b.transpose());
            gc.insert((u, v), b);
        }
    }
    CompactBlocks {
        fa: vec![DVector::zeros(0); u_count],
        ga,
        gr,
        gc,
    }
}

/// Block-form PSD decision and the smallest eigenvalue of the expanded Gram matrix.
pub fn block_vs_dense(partition: &EquivalencePartition, blocks: &CompactBlocks) -> (bool, f64) {
    let reform = psd_reformulation(partition, blocks);
    let (_, g) = expand_solution(partition, blocks).unwrap();
    (all_psd(&reform, 1e-10), min_eig(&g))
}
