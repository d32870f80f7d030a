//! Exact preprocessing: restriction of each PSD block to the span of its
//! coefficient vectors, and optional facial reduction.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{ConicBlock, ConicProgram, ConicRow};
use crate::model::QuadTerm;

/// Reduced program with the maps needed to lift a solution back.
pub(crate) struct Reduced {
    pub program: ConicProgram,
    /// For each original block: the reduced block index and the basis `U`
    /// (`X = U X' U^T`), or `None` when the block vanished.
    pub blocks: Vec<Option<(usize, DMatrix<f64>)>>,
    pub original_dims: Vec<usize>,
    /// Original index of each kept row.
    pub kept_rows: Vec<usize>,
}

fn orthonormal_range(m: &DMatrix<f64>, rel: f64) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > rel * top.max(1e-300)).collect();
    DMatrix::from_fn(n, keep.len(), |r, c| eig.eigenvectors[(r, keep[c])])
}

/// Orthonormal basis of the complement of `range(w)` inside `R^n`.
fn complement(w: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let proj = if w.ncols() == 0 {
        DMatrix::zeros(n, n)
    } else {
        w * w.transpose()
    };
    let rest = DMatrix::identity(n, n) - proj;
    orthonormal_range(&rest, 1e-8)
}

fn transform_block(block: &ConicBlock, basis: &DMatrix<f64>) -> ConicBlock {
    ConicBlock {
        dim: basis.ncols(),
        vectors: block.vectors.iter().map(|v| basis.transpose() * v).collect(),
    }
}

fn row_block_matrix(block: &ConicBlock, terms: &[&QuadTerm]) -> DMatrix<f64> {
    let n = block.dim;
    let mut m = DMatrix::zeros(n, n);
    for t in terms {
        let va = &block.vectors[t.a];
        let vb = &block.vectors[t.b];
        let outer = va * vb.transpose();
        m += (&outer + outer.transpose()) * (0.5 * t.coef);
    }
    m
}

pub(crate) fn reduce(prog: &ConicProgram, facial: bool) -> Reduced {
    let nb = prog.blocks.len();
    let original_dims: Vec<usize> = prog.blocks.iter().map(|b| b.dim).collect();
    // Span reduction.
    let mut bases: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
    let mut blocks: Vec<ConicBlock> = Vec::with_capacity(nb);
    for b in &prog.blocks {
        let mut gram = DMatrix::zeros(b.dim, b.dim);
        for v in &b.vectors {
            gram += v * v.transpose();
        }
        let basis = if b.vectors.len() >= b.dim && is_identity_dictionary(b) {
            DMatrix::identity(b.dim, b.dim)
        } else {
            orthonormal_range(&gram, 1e-12)
        };
        blocks.push(transform_block(b, &basis));
        bases.push(basis);
    }
    let mut rows: Vec<(usize, ConicRow)> = prog.rows.iter().cloned().enumerate().collect();

    if facial {
        for _pass in 0..8 {
            let mut null_dirs: Vec<Vec<DVector<f64>>> = vec![Vec::new(); nb];
            let mut removed = vec![false; rows.len()];
            for (ri, (_, row)) in rows.iter().enumerate() {
                if row.rhs != 0.0 || !row.lp.is_empty() || !row.free.is_empty() || row.psd.is_empty() {
                    continue;
                }
                let mut touched: Vec<usize> = row.psd.iter().map(|t| t.block).collect();
                touched.sort_unstable();
                touched.dedup();
                let mats: Vec<(usize, DMatrix<f64>)> = touched
                    .iter()
                    .map(|&b| {
                        let terms: Vec<&QuadTerm> = row.psd.iter().filter(|t| t.block == b).collect();
                        (b, row_block_matrix(&blocks[b], &terms))
                    })
                    .collect();
                let mut sign = 0.0;
                let mut ok = true;
                for (_, m) in &mats {
                    if m.nrows() == 0 {
                        continue;
                    }
                    let ev = m.symmetric_eigenvalues();
                    let top = ev.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
                    if top == 0.0 {
                        continue;
                    }
                    let lo = ev.min();
                    let hi = ev.max();
                    let s = if lo >= -1e-9 * top {
                        1.0
                    } else if hi <= 1e-9 * top {
                        -1.0
                    } else {
                        ok = false;
                        break;
                    };
                    if sign == 0.0 {
                        sign = s;
                    } else if sign != s {
                        ok = false;
                        break;
                    }
                }
                if !ok || sign == 0.0 {
                    continue;
                }
                for (b, m) in &mats {
                    let r = orthonormal_range(&(m * sign), 1e-9);
                    for c in 0..r.ncols() {
                        null_dirs[*b].push(r.column(c).into_owned());
                    }
                }
                removed[ri] = true;
            }
            if !removed.iter().any(|&r| r) {
                break;
            }
            rows = rows
                .into_iter()
                .zip(removed)
                .filter(|(_, r)| !r)
                .map(|(row, _)| row)
                .collect();
            for b in 0..nb {
                if null_dirs[b].is_empty() || blocks[b].dim == 0 {
                    continue;
                }
                let w = DMatrix::from_columns(&null_dirs[b]);
                let w = orthonormal_range(&(&w * w.transpose()), 1e-9);
                let keep = complement(&w, blocks[b].dim);
                blocks[b] = transform_block(&blocks[b], &keep);
                bases[b] = &bases[b] * keep;
            }
        }
    }

    // Drop empty blocks and renumber.
    let mut new_index = vec![None; nb];
    let mut out_blocks = Vec::new();
    for b in 0..nb {
        if blocks[b].dim > 0 {
            new_index[b] = Some(out_blocks.len());
            out_blocks.push(blocks[b].clone());
        }
    }
    let remap = |row: &ConicRow| -> ConicRow {
        let psd = row
            .psd
            .iter()
            .filter_map(|t| {
                let nb = new_index[t.block]?;
                let block = &out_blocks[nb];
                if block.vectors[t.a].iter().all(|x| *x == 0.0) || block.vectors[t.b].iter().all(|x| *x == 0.0) {
                    return None;
                }
                Some(QuadTerm { block: nb, ..*t })
            })
            .collect();
        ConicRow {
            psd,
            lp: row.lp.clone(),
            free: row.free.clone(),
            rhs: row.rhs,
        }
    };
    let mut program = ConicProgram {
        blocks: out_blocks.clone(),
        lp_dim: prog.lp_dim,
        free_dim: prog.free_dim,
        rows: Vec::new(),
        labels: Vec::new(),
        objective: remap(&prog.objective),
        value_sign: prog.value_sign,
        value_offset: prog.value_offset,
        trivially_infeasible: prog.trivially_infeasible.clone(),
    };
    let mut kept_rows = Vec::new();
    for (orig, row) in &rows {
        let r = remap(row);
        if r.psd.is_empty() && r.lp.is_empty() && r.free.is_empty() {
            if r.rhs.abs() > 1e-12 && program.trivially_infeasible.is_none() {
                program.trivially_infeasible = Some(prog.labels.get(*orig).cloned().unwrap_or_default());
            }
            continue;
        }
        program.rows.push(r);
        program.labels.push(prog.labels.get(*orig).cloned().unwrap_or_default());
        kept_rows.push(*orig);
    }
    let blocks = (0..nb).map(|b| new_index[b].map(|i| (i, bases[b].clone()))).collect();
    Reduced {
        program,
        blocks,
        original_dims,
        kept_rows,
    }
}

fn is_identity_dictionary(b: &ConicBlock) -> bool {
    b.vectors.len() == b.dim
        && b.vectors.iter().enumerate().all(|(i, v)| {
            v.iter()
                .enumerate()
                .all(|(j, &x)| if i == j { x == 1.0 } else { x == 0.0 })
        })
}

impl Reduced {
    /// Lifts reduced block values back to the original blocks.
    pub fn lift(&self, x: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        self.blocks
            .iter()
            .zip(&self.original_dims)
            .map(|(m, &n)| match m {
                Some((i, u)) => u * &x[*i] * u.transpose(),
                None => DMatrix::zeros(n, n),
            })
            .collect()
    }
}
