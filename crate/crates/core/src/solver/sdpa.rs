//! SDPA sparse text export of a [`ConicProgram`] and the matching parser.
//!
//! Each equality row `i` becomes constraint matrix `F_i` with right-hand side
//! `c_i = b_i`; `F_0 = -C`, so the file describes `max <F_0, Y>` subject to
//! `<F_i, Y> = c_i`, `Y` PSD. Nonnegative variables form a trailing diagonal
//! block; each free variable is split as `u = u+ - u-` in that block, which a
//! `* free-split` comment line records.

use std::fmt::Write as _;
use std::path::Path;

use super::{ConicBlock, ConicProgram, ConicRow, EntryMap};
use crate::error::{PepError, Result};

fn row_lines(prog: &ConicProgram, row: &ConicRow, matno: usize, sign: f64, out: &mut Vec<(usize, usize, usize, usize, f64)>) {
    let nb = prog.blocks.len();
    for (&(b, i, j), &v) in &prog.psd_entries(row) {
        out.push((matno, b + 1, i + 1, j + 1, sign * v));
    }
    let mut diag: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
    for &(k, c) in &row.lp {
        *diag.entry(k).or_insert(0.0) += c;
    }
    for &(k, c) in &row.free {
        *diag.entry(prog.lp_dim + k).or_insert(0.0) += c;
        *diag.entry(prog.lp_dim + prog.free_dim + k).or_insert(0.0) -= c;
    }
    for (k, v) in diag {
        if v != 0.0 {
            out.push((matno, nb + 1, k + 1, k + 1, sign * v));
        }
    }
}

/// Renders the program in SDPA sparse format. Output is deterministic.
pub fn to_sdpa_string(prog: &ConicProgram) -> String {
    let mut s = String::new();
    let diag = prog.lp_dim + 2 * prog.free_dim;
    s.push_str("* pepnet conic program\n");
    let _ = writeln!(s, "* free-split {} {}", prog.lp_dim, prog.free_dim);
    let _ = writeln!(s, "* value {} {}", prog.value_sign, prog.value_offset);
    let _ = writeln!(s, "{}", prog.rows.len());
    let nblocks = prog.blocks.len() + usize::from(diag > 0);
    let _ = writeln!(s, "{nblocks}");
    let mut dims: Vec<String> = prog.blocks.iter().map(|b| b.dim.to_string()).collect();
    if diag > 0 {
        dims.push(format!("-{diag}"));
    }
    let _ = writeln!(s, "{}", dims.join(" "));
    let rhs: Vec<String> = prog.rows.iter().map(|r| (r.rhs + 0.0).to_string()).collect();
    let _ = writeln!(s, "{}", rhs.join(" "));
    let mut lines = Vec::new();
    row_lines(prog, &prog.objective, 0, -1.0, &mut lines);
    for (i, row) in prog.rows.iter().enumerate() {
        row_lines(prog, row, i + 1, 1.0, &mut lines);
    }
    lines.sort_by(|a, b| (a.0, a.1, a.2, a.3).cmp(&(b.0, b.1, b.2, b.3)));
    for (m, b, i, j, v) in lines {
        let _ = writeln!(s, "{m} {b} {i} {j} {v}");
    }
    s
}

/// Writes the SDPA file.
pub fn export_standard_form(prog: &ConicProgram, path: &Path) -> Result<()> {
    std::fs::write(path, to_sdpa_string(prog))?;
    Ok(())
}

fn perr(line: usize, msg: impl Into<String>) -> PepError {
    PepError::Parse { line, msg: msg.into() }
}

/// Parses a file written by [`to_sdpa_string`]. Blocks come back with unit
/// dictionaries, so compare programs through [`ConicProgram::psd_entries`].
pub fn parse_sdpa(text: &str) -> Result<ConicProgram> {
    let mut lp_dim = None;
    let mut free_dim = 0;
    let mut value = (1.0, 0.0);
    let mut data: Vec<(usize, &str)> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix("* free-split") {
            let v: Vec<usize> = rest
                .split_whitespace()
                .map(|x| x.parse().map_err(|_| perr(n + 1, "bad free-split line")))
                .collect::<Result<_>>()?;
            if v.len() != 2 {
                return Err(perr(n + 1, "bad free-split line"));
            }
            lp_dim = Some(v[0]);
            free_dim = v[1];
        } else if let Some(rest) = t.strip_prefix("* value") {
            let v: Vec<f64> = rest
                .split_whitespace()
                .map(|x| x.parse().map_err(|_| perr(n + 1, "bad value line")))
                .collect::<Result<_>>()?;
            if v.len() != 2 {
                return Err(perr(n + 1, "bad value line"));
            }
            value = (v[0], v[1]);
        } else if t.starts_with('*') || t.starts_with('"') || t.is_empty() {
            continue;
        } else {
            data.push((n + 1, t));
        }
    }
    let mut it = data.into_iter();
    let (ln, m) = it.next().ok_or_else(|| perr(0, "missing constraint count"))?;
    let m: usize = m.parse().map_err(|_| perr(ln, "bad constraint count"))?;
    let (ln, nb) = it.next().ok_or_else(|| perr(ln, "missing block count"))?;
    let nb: usize = nb.parse().map_err(|_| perr(ln, "bad block count"))?;
    let (ln, dims) = it.next().ok_or_else(|| perr(ln, "missing block structure"))?;
    let dims: Vec<i64> = dims
        .split_whitespace()
        .map(|x| x.parse().map_err(|_| perr(ln, "bad block size")))
        .collect::<Result<_>>()?;
    if dims.len() != nb {
        return Err(perr(ln, "block structure length mismatch"));
    }
    let mut rhs = vec![0.0; m];
    if m > 0 {
        let (ln, r) = it.next().ok_or_else(|| perr(ln, "missing right-hand side"))?;
        let v: Vec<f64> = r
            .split_whitespace()
            .map(|x| x.parse().map_err(|_| perr(ln, "bad right-hand side")))
            .collect::<Result<_>>()?;
        if v.len() != m {
            return Err(perr(ln, "right-hand side length mismatch"));
        }
        rhs = v;
    } else {
        // An empty right-hand side line may be present.
    }
    let mut psd_dims = Vec::new();
    let mut diag_dim = 0usize;
    for &d in &dims {
        if d < 0 {
            diag_dim = (-d) as usize;
        } else {
            psd_dims.push(d as usize);
        }
    }
    let lp_dim = lp_dim.unwrap_or(diag_dim);
    if lp_dim + 2 * free_dim != diag_dim {
        return Err(perr(0, "diagonal block does not match the free-split line"));
    }
    let npsd = psd_dims.len();
    let mut entries: Vec<EntryMap> = vec![EntryMap::new(); m + 1];
    let mut diag: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); m + 1];
    for (ln, t) in it {
        let f: Vec<&str> = t.split_whitespace().collect();
        if f.len() != 5 {
            if f.is_empty() {
                continue;
            }
            return Err(perr(ln, "expected `matrix block i j value`"));
        }
        let p = |s: &str| s.parse::<usize>().map_err(|_| perr(ln, "bad index"));
        let (mat, blk, i, j) = (p(f[0])?, p(f[1])?, p(f[2])?, p(f[3])?);
        let v: f64 = f[4].parse().map_err(|_| perr(ln, "bad value"))?;
        if mat > m || blk == 0 || blk > nb || i == 0 || j == 0 {
            return Err(perr(ln, "index out of range"));
        }
        let v = if mat == 0 { -v } else { v };
        if blk <= npsd {
            let (i, j) = ((i - 1).min(j - 1), (i - 1).max(j - 1));
            if j >= psd_dims[blk - 1] {
                return Err(perr(ln, "index out of range"));
            }
            *entries[mat].entry((blk - 1, i, j)).or_insert(0.0) += v;
        } else {
            if i != j || i > diag_dim {
                return Err(perr(ln, "diagonal block entry off the diagonal"));
            }
            *diag[mat].entry(i - 1).or_insert(0.0) += v;
        }
    }
    let split = |d: &std::collections::BTreeMap<usize, f64>| -> (Vec<(usize, f64)>, Vec<(usize, f64)>) {
        let lp = d.iter().filter(|(k, _)| **k < lp_dim).map(|(k, v)| (*k, *v)).collect();
        let free = d
            .iter()
            .filter(|(k, _)| **k >= lp_dim && **k < lp_dim + free_dim)
            .map(|(k, v)| (*k - lp_dim, *v))
            .collect();
        (lp, free)
    };
    let blocks = psd_dims.iter().map(|&d| ConicBlock::unit(d)).collect();
    let (lp, free) = split(&diag[0]);
    let objective = ConicProgram::row_from_entries(&entries[0], lp, free, 0.0);
    let rows = (1..=m)
        .map(|i| {
            let (lp, free) = split(&diag[i]);
            ConicProgram::row_from_entries(&entries[i], lp, free, rhs[i - 1])
        })
        .collect();
    Ok(ConicProgram {
        blocks,
        lp_dim,
        free_dim,
        rows,
        labels: (0..m).map(|i| format!("row{i}")).collect(),
        objective,
        value_sign: value.0,
        value_offset: value.1,
        trivially_infeasible: None,
    })
}
