//! Infeasible primal-dual path-following method (HKM direction, Mehrotra
//! predictor-corrector) working directly on the dictionary representation.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use super::reduce::reduce;
use super::{ConicProgram, ConicSolution, SolveStatus, SolverOptions};

struct Blk {
    n: usize,
    v: DMatrix<f64>,
    pairs: Vec<(usize, usize)>,
    rows: Vec<usize>,
    terms: Vec<Vec<(usize, f64)>>,
    c: DMatrix<f64>,
}

struct Ipm {
    m: usize,
    active: Vec<usize>,
    blocks: Vec<Blk>,
    nlp: usize,
    lp_cols: Vec<Vec<(usize, f64)>>,
    c_lp: DVector<f64>,
    nf: usize,
    f: DMatrix<f64>,
    c_f: DVector<f64>,
    b: DVector<f64>,
    row_scale: DVector<f64>,
    sb: f64,
    sc: f64,
    norm_b: f64,
    norm_c: f64,
}

#[derive(Clone)]
struct State {
    x: Vec<DMatrix<f64>>,
    z: Vec<DMatrix<f64>>,
    xl: DVector<f64>,
    zl: DVector<f64>,
    u: DVector<f64>,
    y: DVector<f64>,
}

struct Metrics {
    pinf: f64,
    dinf: f64,
    gap: f64,
    pobj: f64,
    dobj: f64,
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn max_step_psd(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    if x.nrows() == 0 {
        return f64::INFINITY;
    }
    let chol = match Cholesky::new(x.clone()) {
        Some(c) => c,
        None => return 0.0,
    };
    let l = chol.l();
    let a = match l.solve_lower_triangular(dx) {
        Some(a) => a,
        None => return 0.0,
    };
    let b = match l.solve_lower_triangular(&a.transpose()) {
        Some(b) => b,
        None => return 0.0,
    };
    let lmin = sym(&b).symmetric_eigenvalues().min();
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn max_step_lp(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}

/// Cholesky factor of a Jacobi-equilibrated matrix, regularized on failure.
struct Factor {
    chol: Cholesky<f64, Dyn>,
    d: DVector<f64>,
}

impl Factor {
    fn solve(&self, r: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(&r.component_mul(&self.d)).component_mul(&self.d)
    }

    fn solve_mat(&self, r: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = r.clone();
        for mut c in out.column_iter_mut() {
            let v = self.solve(&c.clone_owned());
            c.copy_from(&v);
        }
        out
    }
}

fn factor(m: &DMatrix<f64>) -> Option<Factor> {
    let n = m.nrows();
    let d = DVector::from_iterator(n, m.diagonal().iter().map(|&x| if x > 0.0 { 1.0 / x.sqrt() } else { 1.0 }));
    let mut e = m.clone();
    for j in 0..n {
        for i in 0..n {
            e[(i, j)] *= d[i] * d[j];
        }
    }
    if let Some(chol) = Cholesky::new(e.clone()) {
        return Some(Factor { chol, d });
    }
    let mut delta = 1e-14;
    for _ in 0..12 {
        let mut r = e.clone();
        for i in 0..n {
            r[(i, i)] += delta;
        }
        if let Some(chol) = Cholesky::new(r) {
            return Some(Factor { chol, d });
        }
        delta *= 10.0;
    }
    None
}

impl Ipm {
    fn new(prog: &ConicProgram) -> Result<Self, SolveStatus> {
        let nb = prog.blocks.len();
        let vs: Vec<DMatrix<f64>> = prog
            .blocks
            .iter()
            .map(|b| {
                if b.vectors.is_empty() {
                    DMatrix::zeros(b.dim, 0)
                } else {
                    DMatrix::from_columns(&b.vectors)
                }
            })
            .collect();
        let grams: Vec<DMatrix<f64>> = vs.iter().map(|v| v.transpose() * v).collect();
        // Row norms and active rows.
        let mut active = Vec::new();
        let mut norms = Vec::new();
        for (ri, row) in prog.rows.iter().enumerate() {
            let mut n2 = 0.0;
            let mut merged: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
            for t in &row.psd {
                let key = (t.block, t.a.min(t.b), t.a.max(t.b));
                *merged.entry(key).or_insert(0.0) += t.coef;
            }
            let terms: Vec<_> = merged.into_iter().filter(|(_, c)| *c != 0.0).collect();
            for (i, &((bs, a, b), cs)) in terms.iter().enumerate() {
                for &((bt, c, d), ct) in &terms[i..] {
                    if bs != bt {
                        continue;
                    }
                    let g = &grams[bs];
                    let v = cs * ct * 0.5 * (g[(a, c)] * g[(b, d)] + g[(a, d)] * g[(b, c)]);
                    n2 += if (a, b) == (c, d) { v } else { 2.0 * v };
                }
            }
            n2 += row.lp.iter().map(|(_, c)| c * c).sum::<f64>();
            n2 += row.free.iter().map(|(_, c)| c * c).sum::<f64>();
            let n = n2.max(0.0).sqrt();
            if n < 1e-13 {
                if row.rhs.abs() > 1e-10 {
                    return Err(SolveStatus::Infeasible);
                }
                continue;
            }
            active.push(ri);
            norms.push(n);
        }
        let m = active.len();
        let row_scale = DVector::from_iterator(m, norms.iter().map(|n| 1.0 / n));
        let mut b = DVector::from_iterator(m, active.iter().map(|&r| prog.rows[r].rhs));
        b.component_mul_assign(&row_scale);
        let norm_b_orig = prog.rows.iter().map(|r| r.rhs * r.rhs).sum::<f64>().sqrt();

        let mut blocks: Vec<Blk> = Vec::with_capacity(nb);
        for (bi, blk) in prog.blocks.iter().enumerate() {
            let mut pair_index: HashMap<(usize, usize), usize> = HashMap::new();
            let mut pairs = Vec::new();
            let mut rows = Vec::new();
            let mut terms = Vec::new();
            for (li, &ri) in active.iter().enumerate() {
                let mut local: Vec<(usize, f64)> = Vec::new();
                for t in prog.rows[ri].psd.iter().filter(|t| t.block == bi) {
                    let key = (t.a.min(t.b), t.a.max(t.b));
                    let p = *pair_index.entry(key).or_insert_with(|| {
                        pairs.push(key);
                        pairs.len() - 1
                    });
                    match local.iter_mut().find(|(q, _)| *q == p) {
                        Some(e) => e.1 += t.coef * row_scale[li],
                        None => local.push((p, t.coef * row_scale[li])),
                    }
                }
                local.retain(|(_, c)| *c != 0.0);
                if !local.is_empty() {
                    rows.push(li);
                    terms.push(local);
                }
            }
            let v = vs[bi].clone();
            let mut c = DMatrix::zeros(blk.dim, blk.dim);
            for t in prog.objective.psd.iter().filter(|t| t.block == bi) {
                let outer = blk.vectors[t.a].clone() * blk.vectors[t.b].transpose();
                c += sym(&outer) * t.coef;
            }
            blocks.push(Blk {
                n: blk.dim,
                v,
                pairs,
                rows,
                terms,
                c,
            });
        }
        let mut lp_cols = vec![Vec::new(); prog.lp_dim];
        let mut f = DMatrix::zeros(m, prog.free_dim);
        for (li, &ri) in active.iter().enumerate() {
            for &(k, c) in &prog.rows[ri].lp {
                lp_cols[k].push((li, c * row_scale[li]));
            }
            for &(k, c) in &prog.rows[ri].free {
                f[(li, k)] += c * row_scale[li];
            }
        }
        let mut c_lp: DVector<f64> = DVector::zeros(prog.lp_dim);
        for &(k, c) in &prog.objective.lp {
            c_lp[k] += c;
        }
        let mut c_f: DVector<f64> = DVector::zeros(prog.free_dim);
        for &(k, c) in &prog.objective.free {
            c_f[k] += c;
        }
        // Free variables not touched by any row.
        for k in 0..prog.free_dim {
            if f.column(k).iter().all(|x| *x == 0.0) && c_f[k] != 0.0 {
                return Err(SolveStatus::Unbounded);
            }
        }
        let norm_c = (blocks.iter().map(|b| b.c.norm_squared()).sum::<f64>()
            + c_lp.norm_squared()
            + c_f.norm_squared())
        .sqrt();
        let sb = b.norm().max(1.0);
        let sc = norm_c.max(1.0);
        b /= sb;
        for blk in &mut blocks {
            blk.c /= sc;
        }
        c_lp /= sc;
        c_f /= sc;
        Ok(Self {
            m,
            active,
            blocks,
            nlp: prog.lp_dim,
            lp_cols,
            c_lp,
            nf: prog.free_dim,
            f,
            c_f,
            b,
            row_scale,
            sb,
            sc,
            norm_b: norm_b_orig,
            norm_c,
        })
    }

    fn a_op(&self, x: &[DMatrix<f64>], xl: &DVector<f64>, u: Option<&DVector<f64>>) -> DVector<f64> {
        let mut out = DVector::zeros(self.m);
        for (blk, xb) in self.blocks.iter().zip(x) {
            if blk.rows.is_empty() {
                continue;
            }
            let q = blk.v.transpose() * xb * &blk.v;
            for (li, terms) in blk.rows.iter().zip(&blk.terms) {
                out[*li] += terms.iter().map(|&(p, c)| c * q[blk.pairs[p]]).sum::<f64>();
            }
        }
        for (k, col) in self.lp_cols.iter().enumerate() {
            for &(i, c) in col {
                out[i] += c * xl[k];
            }
        }
        if let Some(u) = u {
            out += &self.f * u;
        }
        out
    }

    fn at_op(&self, y: &DVector<f64>) -> (Vec<DMatrix<f64>>, DVector<f64>) {
        let mut mats = Vec::with_capacity(self.blocks.len());
        for blk in &self.blocks {
            let k = blk.v.ncols();
            let mut s = DMatrix::zeros(k, k);
            for (li, terms) in blk.rows.iter().zip(&blk.terms) {
                for &(p, c) in terms {
                    let (a, b) = blk.pairs[p];
                    let w = 0.5 * c * y[*li];
                    s[(a, b)] += w;
                    s[(b, a)] += w;
                }
            }
            mats.push(&blk.v * s * blk.v.transpose());
        }
        let mut lp = DVector::zeros(self.nlp);
        for (k, col) in self.lp_cols.iter().enumerate() {
            lp[k] = col.iter().map(|&(i, c)| c * y[i]).sum();
        }
        (mats, lp)
    }

    /// Schur complement `M_ij = <A_i, X A_j Z^{-1}>`. Each block contributes
    /// the Gram matrix of `B_i = L_x^T A_i L_z^{-T}`, which keeps `M`
    /// semidefinite in floating point.
    fn schur(&self, x: &[DMatrix<f64>], qs: &[DMatrix<f64>], d_lp: &DVector<f64>) -> DMatrix<f64> {
        let m = self.m;
        let mut mm = DMatrix::zeros(m, m);
        for (bi, blk) in self.blocks.iter().enumerate() {
            if blk.rows.is_empty() {
                continue;
            }
            let n = blk.n;
            let p = match Cholesky::new(x[bi].clone()) {
                Some(c) => c.l().transpose() * &blk.v,
                None => {
                    let eig = SymmetricEigen::new(x[bi].clone());
                    let root = DVector::from_iterator(n, eig.eigenvalues.iter().map(|&e| e.max(0.0).sqrt()));
                    DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose() * &blk.v
                }
            };
            let q = &qs[bi];
            let mut bm = DMatrix::<f64>::zeros(n * n, blk.rows.len());
            for (r, terms) in blk.terms.iter().enumerate() {
                let mut col = bm.column_mut(r);
                for &(pi, coef) in terms {
                    let (a, c) = blk.pairs[pi];
                    let h = 0.5 * coef;
                    for jj in 0..n {
                        let (qc, qa) = (q[(jj, c)] * h, q[(jj, a)] * h);
                        for ii in 0..n {
                            col[jj * n + ii] += p[(ii, a)] * qc + p[(ii, c)] * qa;
                        }
                    }
                }
            }
            let g = bm.transpose() * &bm;
            for (j, &rj) in blk.rows.iter().enumerate() {
                for (i, &ri) in blk.rows.iter().enumerate() {
                    mm[(ri, rj)] += g[(i, j)];
                }
            }
        }
        for (k, col) in self.lp_cols.iter().enumerate() {
            for &(i, a) in col {
                for &(j, b) in col {
                    mm[(i, j)] += a * b * d_lp[k];
                }
            }
        }
        mm
    }

    fn total_dim(&self) -> f64 {
        (self.blocks.iter().map(|b| b.n).sum::<usize>() + self.nlp) as f64
    }

    fn residuals(&self, s: &State) -> (DVector<f64>, Vec<DMatrix<f64>>, DVector<f64>, DVector<f64>) {
        let rp = &self.b - self.a_op(&s.x, &s.xl, Some(&s.u));
        let (aty, aty_lp) = self.at_op(&s.y);
        let rd: Vec<DMatrix<f64>> = self
            .blocks
            .iter()
            .zip(aty.iter().zip(&s.z))
            .map(|(b, (a, z))| &b.c - a - z)
            .collect();
        let rd_lp = &self.c_lp - aty_lp - &s.zl;
        let rf = &self.c_f - self.f.transpose() * &s.y;
        (rp, rd, rd_lp, rf)
    }

    fn objectives(&self, s: &State) -> (f64, f64) {
        let p = self.blocks.iter().zip(&s.x).map(|(b, x)| inner(&b.c, x)).sum::<f64>()
            + self.c_lp.dot(&s.xl)
            + self.c_f.dot(&s.u);
        (p, self.b.dot(&s.y))
    }

    fn metrics(&self, s: &State, rp: &DVector<f64>, rd: &[DMatrix<f64>], rd_lp: &DVector<f64>, rf: &DVector<f64>) -> Metrics {
        let (p, d) = self.objectives(s);
        let unscaled_rp = rp.component_div(&self.row_scale).norm() * self.sb;
        let rd_norm = (rd.iter().map(|r| r.norm_squared()).sum::<f64>() + rd_lp.norm_squared() + rf.norm_squared()).sqrt();
        let pobj = p * self.sb * self.sc;
        let dobj = d * self.sb * self.sc;
        Metrics {
            pinf: unscaled_rp / (1.0 + self.norm_b),
            dinf: rd_norm * self.sc / (1.0 + self.norm_c),
            gap: (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
            pobj,
            dobj,
        }
    }

    fn initial(&self) -> State {
        let x = self
            .blocks
            .iter()
            .map(|b| {
                let xi = 10f64.max((b.n as f64).sqrt());
                DMatrix::identity(b.n, b.n) * xi
            })
            .collect::<Vec<_>>();
        let z = x.clone();
        State {
            x,
            z,
            xl: DVector::from_element(self.nlp, 10.0),
            zl: DVector::from_element(self.nlp, 10.0),
            u: DVector::zeros(self.nf),
            y: DVector::zeros(self.m),
        }
    }

    fn run(&self, opts: &SolverOptions) -> (State, SolveStatus, usize, Metrics, bool) {
        let mut s = self.initial();
        let ntot = self.total_dim().max(1.0);
        let mut best: Option<(f64, State)> = None;
        let mut status = SolveStatus::NumericalTrouble;
        let mut reached = false;
        let mut iter = 0;
        let mut stall = 0;
        let mut prev = [f64::INFINITY; 3];
        loop {
            let (rp, rd, rd_lp, rf) = self.residuals(&s);
            let met = self.metrics(&s, &rp, &rd, &rd_lp, &rf);
            let merit = met.pinf.max(met.dinf).max(met.gap);
            if opts.verbose {
                eprintln!(
                    "it {iter:3} p {:+.8e} d {:+.8e} pinf {:.2e} dinf {:.2e} gap {:.2e}",
                    met.pobj, met.dobj, met.pinf, met.dinf, met.gap
                );
            }
            if best.as_ref().map_or(true, |(m, _)| merit < *m) {
                best = Some((merit, s.clone()));
            }
            if met.pinf <= opts.tol_feas && met.dinf <= opts.tol_feas && met.gap <= opts.tol_gap {
                status = SolveStatus::Optimal;
                reached = true;
                break;
            }
            // Certificates of infeasibility in scaled units.
            let (p, d) = self.objectives(&s);
            let cnorm = (self.blocks.iter().map(|b| b.c.norm_squared()).sum::<f64>()
                + self.c_lp.norm_squared()
                + self.c_f.norm_squared())
            .sqrt();
            let rd_norm = (rd.iter().map(|r| r.norm_squared()).sum::<f64>() + rd_lp.norm_squared() + rf.norm_squared()).sqrt();
            if d > 0.0 && (cnorm + rd_norm) / d < 1e-8 {
                status = SolveStatus::Infeasible;
                break;
            }
            if p < 0.0 && (&self.b - &rp).norm() / -p < 1e-8 {
                status = SolveStatus::Unbounded;
                break;
            }
            if iter >= opts.max_iter {
                break;
            }
            // Progress in any unconverged measure resets the stall counter.
            let now = [met.pinf, met.dinf, met.gap];
            let tols = [opts.tol_feas, opts.tol_feas, opts.tol_gap];
            let progressed = (0..3).any(|k| now[k] > tols[k] && now[k] < 0.9 * prev[k]);
            stall = if progressed { 0 } else { stall + 1 };
            // The starting point can have a spurious zero gap.
            if iter > 0 {
                for k in 0..3 {
                    prev[k] = prev[k].min(now[k]);
                }
            }
            if stall >= 8 {
                break;
            }
            iter += 1;
            match self.step(&mut s, &rp, &rd, &rd_lp, &rf, ntot) {
                Some(true) => {}
                Some(false) | None => break,
            }
        }
        let (merit, best_state) = best.unwrap();
        let (rp, rd, rd_lp, rf) = self.residuals(&best_state);
        let met = self.metrics(&best_state, &rp, &rd, &rd_lp, &rf);
        if status == SolveStatus::NumericalTrouble && merit <= opts.tol_accept {
            status = SolveStatus::Optimal;
        }
        if matches!(status, SolveStatus::Infeasible | SolveStatus::Unbounded) {
            let (rp, rd, rd_lp, rf) = self.residuals(&s);
            let met = self.metrics(&s, &rp, &rd, &rd_lp, &rf);
            return (s, status, iter, met, false);
        }
        (best_state, status, iter, met, reached)
    }

    /// Takes one predictor-corrector step; returns `Some(false)` on a stall.
    fn step(
        &self,
        s: &mut State,
        rp: &DVector<f64>,
        rd: &[DMatrix<f64>],
        rd_lp: &DVector<f64>,
        rf: &DVector<f64>,
        ntot: f64,
    ) -> Option<bool> {
        let nb = self.blocks.len();
        // `Z^{-1}` is applied through triangular solves.
        let mut zc = Vec::with_capacity(nb);
        let mut zi = Vec::with_capacity(nb);
        let mut qzs = Vec::with_capacity(nb);
        for (z, blk) in s.z.iter().zip(&self.blocks) {
            let c = Cholesky::new(z.clone())?;
            qzs.push(c.l_dirty().solve_lower_triangular(&blk.v)?);
            zi.push(sym(&c.inverse()));
            zc.push(c);
        }
        // `sym(A Z^{-1})` for block `b`.
        let right = |b: usize, a: &DMatrix<f64>| -> DMatrix<f64> {
            if a.nrows() == 0 {
                return a.clone();
            }
            sym(&zc[b].solve(&a.transpose()).transpose())
        };
        let d_lp = s.xl.component_div(&s.zl);
        let mm = self.schur(&s.x, &qzs, &d_lp);
        let chol = factor(&mm)?;
        let mif = chol.solve_mat(&self.f);
        let sf = self.f.transpose() * &mif;
        let schol = if self.nf > 0 { Some(factor(&sf)?) } else { None };

        let mu = (s.x.iter().zip(&s.z).map(|(x, z)| inner(x, z)).sum::<f64>() + s.xl.dot(&s.zl)) / ntot;
        // Solves `M dy + F du = r`, `F^T dy = rf`.
        let kkt = |r: &DVector<f64>, rf: &DVector<f64>| -> (DVector<f64>, DVector<f64>) {
            let mir = chol.solve(r);
            let du = match &schol {
                Some(sc) => sc.solve(&(self.f.transpose() * &mir - rf)),
                None => DVector::zeros(0),
            };
            let dy = if self.nf > 0 { &mir - &mif * &du } else { mir };
            (dy, du)
        };
        let xrdzi: Vec<DMatrix<f64>> = (0..nb).map(|b| right(b, &(&s.x[b] * &rd[b]))).collect();

        let direction = |sigma_mu: f64,
                         corr: Option<(&[DMatrix<f64>], &DVector<f64>)>|
         -> (Vec<DMatrix<f64>>, DVector<f64>, DVector<f64>, DVector<f64>, Vec<DMatrix<f64>>, DVector<f64>) {
            let h: Vec<DMatrix<f64>> = (0..nb)
                .map(|b| {
                    let mut h = &zi[b] * sigma_mu - &s.x[b] - &xrdzi[b];
                    if let Some((c, _)) = corr {
                        h -= &c[b];
                    }
                    h
                })
                .collect();
            let mut hl = DVector::zeros(self.nlp);
            for k in 0..self.nlp {
                let c = corr.map_or(0.0, |(_, l)| l[k]);
                hl[k] = (sigma_mu - c) / s.zl[k] - s.xl[k] - d_lp[k] * rd_lp[k];
            }
            let r = rp - self.a_op(&h, &hl, None);
            let (mut dy, mut du) = kkt(&r, rf);
            // Refinement against the unregularized Schur complement.
            for _ in 0..6 {
                let e1 = &r - &mm * &dy - &self.f * &du;
                let e2 = rf - self.f.transpose() * &dy;
                if e1.amax() <= 1e-15 * (1.0 + r.amax()) && e2.amax() <= 1e-15 * (1.0 + rf.amax()) {
                    break;
                }
                let (cy, cu) = kkt(&e1, &e2);
                dy += cy;
                du += cu;
            }
            let (aty, aty_lp) = self.at_op(&dy);
            let mut dx: Vec<DMatrix<f64>> = (0..nb).map(|b| &h[b] + right(b, &(&s.x[b] * &aty[b]))).collect();
            let mut dxl = &hl + d_lp.component_mul(&aty_lp);
            // Refinement of the linearized primal equation `A dx + F du = rp`;
            // a correction is kept only if it shrinks the residual.
            let zero = DVector::zeros(self.nf);
            let mut e = rp - self.a_op(&dx, &dxl, Some(&du));
            for _ in 0..3 {
                let en = e.amax();
                if en <= 1e-14 * (1.0 + rp.amax()) {
                    break;
                }
                let (cy, cu) = kkt(&e, &zero);
                let (cty, cty_lp) = self.at_op(&cy);
                let ndx: Vec<DMatrix<f64>> = (0..nb).map(|b| &dx[b] + right(b, &(&s.x[b] * &cty[b]))).collect();
                let ndxl = &dxl + d_lp.component_mul(&cty_lp);
                let ndu = &du + &cu;
                let ne = rp - self.a_op(&ndx, &ndxl, Some(&ndu));
                if ne.amax() >= en {
                    break;
                }
                dx = ndx;
                dxl = ndxl;
                du = ndu;
                dy += cy;
                e = ne;
            }
            let (aty, aty_lp) = self.at_op(&dy);
            let dz: Vec<DMatrix<f64>> = (0..nb).map(|b| &rd[b] - &aty[b]).collect();
            let dzl = rd_lp - &aty_lp;
            (dx, dxl, du, dy, dz, dzl)
        };
        let steps = |dx: &[DMatrix<f64>], dxl: &DVector<f64>, dz: &[DMatrix<f64>], dzl: &DVector<f64>| -> (f64, f64) {
            let mut ap = max_step_lp(&s.xl, dxl);
            let mut ad = max_step_lp(&s.zl, dzl);
            for b in 0..nb {
                ap = ap.min(max_step_psd(&s.x[b], &dx[b]));
                ad = ad.min(max_step_psd(&s.z[b], &dz[b]));
            }
            (ap, ad)
        };

        let (dxa, dxla, _, _, dza, dzla) = direction(0.0, None);
        let (apa, ada) = steps(&dxa, &dxla, &dza, &dzla);
        let (apa, ada) = (apa.min(1.0), ada.min(1.0));
        let mu_aff = ((0..nb)
            .map(|b| inner(&(&s.x[b] + &dxa[b] * apa), &(&s.z[b] + &dza[b] * ada)))
            .sum::<f64>()
            + (&s.xl + &dxla * apa).dot(&(&s.zl + &dzla * ada)))
            / ntot;
        let expon = if mu > 1e-6 { 2.0f64.max(3.0 * apa.min(ada).powi(2)) } else { 3.0 };
        let sigma = (mu_aff / mu).max(0.0).powf(expon).min(1.0);
        let corr: Vec<DMatrix<f64>> = (0..nb).map(|b| right(b, &(&dxa[b] * &dza[b]))).collect();
        let corr_lp = dxla.component_mul(&dzla);
        let (dx, dxl, du, dy, dz, dzl) = direction(sigma * mu, Some((&corr, &corr_lp)));
        let (ap, ad) = steps(&dx, &dxl, &dz, &dzl);
        let gamma = 0.9 + 0.09 * apa.min(ada);
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);
        if !(ap.is_finite() && ad.is_finite()) {
            return None;
        }
        for b in 0..nb {
            s.x[b] += &dx[b] * ap;
            s.x[b] = sym(&s.x[b]);
            s.z[b] += &dz[b] * ad;
            s.z[b] = sym(&s.z[b]);
        }
        s.xl += &dxl * ap;
        s.zl += &dzl * ad;
        if self.nf > 0 {
            s.u += &du * ap;
        }
        s.y += &dy * ad;
        Some(ap > 1e-12 || ad > 1e-12)
    }

    fn unscale(&self, s: &State) -> (Vec<DMatrix<f64>>, DVector<f64>, DVector<f64>, DVector<f64>) {
        let x = s.x.iter().map(|x| x * self.sb).collect();
        let xl = &s.xl * self.sb;
        let u = &s.u * self.sb;
        let y = s.y.component_mul(&self.row_scale) * self.sc;
        (x, xl, u, y)
    }
}

fn empty_solution(prog: &ConicProgram, status: SolveStatus) -> ConicSolution {
    ConicSolution {
        status,
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        x: prog.blocks.iter().map(|b| DMatrix::zeros(b.dim, b.dim)).collect(),
        x_lp: DVector::zeros(prog.lp_dim),
        u: DVector::zeros(prog.free_dim),
        y: DVector::zeros(prog.rows.len()),
        iterations: 0,
        primal_infeasibility: f64::INFINITY,
        dual_infeasibility: f64::INFINITY,
        gap: f64::INFINITY,
        reached_tolerance: false,
    }
}

/// Solves a conic program in standard form.
pub fn solve_conic(prog: &ConicProgram, opts: &SolverOptions) -> ConicSolution {
    if prog.trivially_infeasible.is_some() {
        return empty_solution(prog, SolveStatus::Infeasible);
    }
    let red = reduce(prog, opts.facial_reduction);
    if red.program.trivially_infeasible.is_some() {
        return empty_solution(prog, SolveStatus::Infeasible);
    }
    let ipm = match Ipm::new(&red.program) {
        Ok(i) => i,
        Err(status) => return empty_solution(prog, status),
    };
    let (state, status, iterations, met, reached) = ipm.run(opts);
    let (x, xl, u, y_red) = ipm.unscale(&state);
    let x = red.lift(&x);
    // Map duals back through the dropped rows.
    let mut y = DVector::zeros(prog.rows.len());
    for (k, &li) in ipm.active.iter().enumerate() {
        y[red.kept_rows[li]] = y_red[k];
    }
    ConicSolution {
        status,
        primal_objective: met.pobj,
        dual_objective: met.dobj,
        x,
        x_lp: xl,
        u,
        y,
        iterations,
        primal_infeasibility: met.pinf,
        dual_infeasibility: met.dinf,
        gap: met.gap,
        reached_tolerance: reached,
    }
}
