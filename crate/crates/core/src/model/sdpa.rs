//! SDPA sparse format (`.dat-s`).
//!
//! The file describes `min cᵀx  s.t.  Σ_k F_k x_k − F_0 ⪰ 0`. It is loaded as
//! the dual view with `y = −x`: `A_k = F_k`, `b = c`, `C = −F_0`. Diagonal
//! blocks (negative sizes) become rows of the explicit linear constraints,
//! `D[:, k] = diag(F_k)` and `d = −diag(F_0)`, concatenated in file order.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{SparseSym, Vector};

use super::{LinMatrix, SdpProblem};

pub fn load_sdpa(path: impl AsRef<Path>) -> Result<SdpProblem> {
    let text = std::fs::read_to_string(path)?;
    parse_sdpa(&text)
}

struct Tokens<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    pending: Vec<String>,
    line_no: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        Tokens { lines: text.lines().enumerate().peekable(), pending: Vec::new(), line_no: 0 }
    }

    fn split(line: &str) -> Vec<String> {
        line.split(|c: char| c.is_whitespace() || matches!(c, ',' | '{' | '}' | '(' | ')'))
            .filter(|t| !t.is_empty())
            .map(str::to_owned)
            .collect()
    }

    /// Next token, skipping blank lines and the leading comment lines.
    fn next(&mut self) -> Option<(usize, String)> {
        loop {
            if !self.pending.is_empty() {
                return Some((self.line_no, self.pending.remove(0)));
            }
            let (idx, line) = self.lines.next()?;
            self.line_no = idx + 1;
            let trimmed = line.trim_start();
            if trimmed.starts_with('"') || trimmed.starts_with('*') {
                continue;
            }
            self.pending = Self::split(line);
        }
    }

    /// The remaining tokens of the current line followed by whole lines.
    fn next_line(&mut self) -> Option<(usize, Vec<String>)> {
        if !self.pending.is_empty() {
            return Some((self.line_no, std::mem::take(&mut self.pending)));
        }
        loop {
            let (idx, line) = self.lines.next()?;
            self.line_no = idx + 1;
            let toks = Self::split(line);
            if !toks.is_empty() {
                return Some((self.line_no, toks));
            }
        }
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, tok: &str, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::Parse { line, msg: format!("expected {what}, found {tok:?}") })
}

fn expect<T: std::str::FromStr>(toks: &mut Tokens<'_>, what: &str) -> Result<(usize, T)> {
    let (line, tok) = toks
        .next()
        .ok_or_else(|| Error::Parse { line: toks.line_no, msg: format!("unexpected end of file, expected {what}") })?;
    Ok((line, parse_num(line, &tok, what)?))
}

enum BlockKind {
    Matrix { index: usize, dim: usize },
    Diagonal { offset: usize, dim: usize },
}

pub fn parse_sdpa(text: &str) -> Result<SdpProblem> {
    let mut toks = Tokens::new(text);
    let (_, n): (usize, usize) = expect(&mut toks, "number of constraint matrices")?;
    let (line, nblocks): (usize, usize) = expect(&mut toks, "number of blocks")?;
    if n == 0 || nblocks == 0 {
        return Err(Error::Parse { line, msg: "need at least one constraint and one block".into() });
    }

    let mut kinds = Vec::with_capacity(nblocks);
    let mut lmi_dims = Vec::new();
    let mut lin_rows = 0usize;
    for _ in 0..nblocks {
        let (line, size): (usize, i64) = expect(&mut toks, "block size")?;
        if size == 0 {
            return Err(Error::Parse { line, msg: "block size 0".into() });
        }
        if size > 0 {
            kinds.push(BlockKind::Matrix { index: lmi_dims.len(), dim: size as usize });
            lmi_dims.push(size as usize);
        } else {
            let dim = size.unsigned_abs() as usize;
            kinds.push(BlockKind::Diagonal { offset: lin_rows, dim });
            lin_rows += dim;
        }
    }
    if lmi_dims.is_empty() {
        return Err(Error::Parse { line, msg: "no matrix block declared".into() });
    }

    let mut b = Vector::zeros(n);
    for k in 0..n {
        b[k] = expect::<f64>(&mut toks, "objective coefficient")?.1;
    }

    // (matrix index 0..=n, block, row, col, value), 0-based.
    let mut lmi_entries: Vec<Vec<Vec<(usize, usize, f64)>>> = vec![vec![Vec::new(); n + 1]; lmi_dims.len()];
    let mut lin_entries = Vec::new();
    let mut d = Vector::zeros(lin_rows);
    let mut seen = HashSet::new();

    while let Some((line, fields)) = toks.next_line() {
        if fields.len() != 5 {
            return Err(Error::Parse { line, msg: format!("expected 5 fields per entry, found {}", fields.len()) });
        }
        let mat: usize = parse_num(line, &fields[0], "matrix number")?;
        let blk: usize = parse_num(line, &fields[1], "block number")?;
        let i: usize = parse_num(line, &fields[2], "row index")?;
        let j: usize = parse_num(line, &fields[3], "column index")?;
        let v: f64 = parse_num(line, &fields[4], "value")?;
        if mat > n {
            return Err(Error::Parse { line, msg: format!("matrix number {mat} exceeds {n}") });
        }
        if blk == 0 || blk > nblocks {
            return Err(Error::Parse { line, msg: format!("block number {blk} outside 1..={nblocks}") });
        }
        if !v.is_finite() {
            return Err(Error::Parse { line, msg: format!("non-finite value {v}") });
        }
        let (r, c) = (i.max(j), i.min(j));
        if c == 0 {
            return Err(Error::Parse { line, msg: "indices are 1-based".into() });
        }
        if !seen.insert((mat, blk, r, c)) {
            return Err(Error::Parse { line, msg: format!("duplicate entry ({i}, {j}) in matrix {mat}, block {blk}") });
        }
        match kinds[blk - 1] {
            BlockKind::Matrix { index, dim } => {
                if r > dim {
                    return Err(Error::Parse { line, msg: format!("index {r} exceeds block size {dim}") });
                }
                let v = if mat == 0 { -v } else { v };
                lmi_entries[index][mat].push((r - 1, c - 1, v));
            }
            BlockKind::Diagonal { offset, dim } => {
                if r != c {
                    return Err(Error::Parse { line, msg: format!("off-diagonal entry ({i}, {j}) in diagonal block {blk}") });
                }
                if r > dim {
                    return Err(Error::Parse { line, msg: format!("index {r} exceeds diagonal block size {dim}") });
                }
                if mat == 0 {
                    d[offset + r - 1] = -v;
                } else {
                    lin_entries.push((offset + r - 1, mat - 1, v));
                }
            }
        }
    }

    let mut constraints = Vec::with_capacity(lmi_dims.len());
    let mut objective = Vec::with_capacity(lmi_dims.len());
    for (bi, per_mat) in lmi_entries.into_iter().enumerate() {
        let m = lmi_dims[bi];
        let mut mats = per_mat.into_iter();
        objective.push(SparseSym::new(m, mats.next().unwrap_or_default())?);
        constraints.push(mats.map(|e| SparseSym::new(m, e)).collect::<Result<Vec<_>>>()?);
    }
    let lin = LinMatrix::new(lin_rows, n, lin_entries)?;
    SdpProblem::new(constraints, objective, b, lin, d)
}

fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serializes in the orientation read by [`parse_sdpa`]; values carry 17
/// significant digits so every `f64` survives a round trip bit for bit.
pub fn write_sdpa_to(prob: &SdpProblem, comment: &str) -> String {
    let mut out = String::new();
    for line in comment.lines() {
        let _ = writeln!(out, "\"{line}");
    }
    let nlin = prob.num_lin();
    let nblocks = prob.num_blocks() + usize::from(nlin > 0);
    let _ = writeln!(out, "{}", prob.n());
    let _ = writeln!(out, "{nblocks}");
    let mut sizes: Vec<String> = prob.block_dims().iter().map(|m| m.to_string()).collect();
    if nlin > 0 {
        sizes.push(format!("-{nlin}"));
    }
    let _ = writeln!(out, "{}", sizes.join(" "));
    let b: Vec<String> = prob.b().iter().map(|&v| fmt_value(v)).collect();
    let _ = writeln!(out, "{}", b.join(" "));

    let lin_block = prob.num_blocks() + 1;
    let write_sparse = |out: &mut String, mat: usize, blk: usize, a: &SparseSym, sign: f64| {
        for &(r, c, v) in a.entries() {
            let _ = writeln!(out, "{mat} {blk} {} {} {}", c + 1, r + 1, fmt_value(sign * v));
        }
    };
    for (i, c) in (0..prob.num_blocks()).map(|i| (i, prob.objective(i))) {
        write_sparse(&mut out, 0, i + 1, c, -1.0);
    }
    for (r, &v) in prob.lin_rhs().iter().enumerate() {
        if v != 0.0 {
            let _ = writeln!(out, "0 {lin_block} {} {} {}", r + 1, r + 1, fmt_value(-v));
        }
    }
    let mut lin_by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); prob.n()];
    for &(r, c, v) in prob.lin().entries() {
        lin_by_col[c].push((r, v));
    }
    for j in 0..prob.n() {
        for i in 0..prob.num_blocks() {
            write_sparse(&mut out, j + 1, i + 1, &prob.constraints(i)[j], 1.0);
        }
        for &(r, v) in &lin_by_col[j] {
            let _ = writeln!(out, "{} {lin_block} {} {} {}", j + 1, r + 1, r + 1, fmt_value(v));
        }
    }
    out
}

pub fn write_sdpa(prob: &SdpProblem, path: impl AsRef<Path>, comment: &str) -> Result<()> {
    std::fs::write(path, write_sdpa_to(prob, comment))?;
    Ok(())
}
