use crate::error::{Error, Result};

use super::{DenseSym, Mat};

/// Sparse symmetric matrix stored as its lower triangle in coordinate form.
///
/// Entries are sorted by `(row, col)`, satisfy `row >= col`, and carry no
/// duplicate coordinates. The upper triangle is expanded on the fly.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSym {
    dim: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    /// Builds from triplets given in either triangle. Explicit zeros are kept so
    /// that file round-trips preserve structure.
    pub fn new(dim: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = triplets
            .into_iter()
            .map(|(r, c, v)| if r >= c { (r, c, v) } else { (c, r, v) })
            .collect();
        for &(r, _, v) in &entries {
            if r >= dim {
                return Err(Error::InvalidSparse(format!("index {r} out of range for dimension {dim}")));
            }
            if !v.is_finite() {
                return Err(Error::InvalidSparse(format!("non-finite value {v}")));
            }
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        if let Some(w) = entries.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::InvalidSparse(format!("duplicate coordinate ({}, {})", w[0].0, w[0].1)));
        }
        Ok(SparseSym { dim, entries })
    }

    pub fn zeros(dim: usize) -> Self {
        SparseSym { dim, entries: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Stored (lower-triangle) entries.
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn nnz_stored(&self) -> usize {
        self.entries.len()
    }

    /// Nonzeros of the full symmetric matrix.
    pub fn nnz_full(&self) -> usize {
        self.entries.iter().map(|&(r, c, _)| if r == c { 1 } else { 2 }).sum()
    }

    pub fn is_structurally_zero(&self) -> bool {
        self.entries.iter().all(|&(_, _, v)| v == 0.0)
    }

    pub fn to_dense(&self) -> DenseSym {
        let mut m = Mat::zeros(self.dim, self.dim);
        self.add_to(&mut m, 1.0);
        DenseSym::new(m)
    }

    /// `out += alpha * self` on a full square matrix.
    pub fn add_to(&self, out: &mut Mat, alpha: f64) {
        for &(r, c, v) in &self.entries {
            out[(r, c)] += alpha * v;
            if r != c {
                out[(c, r)] += alpha * v;
            }
        }
    }

    /// `self • M = tr(self · M)` for a symmetric dense `M`.
    pub fn dot_dense(&self, m: &Mat) -> f64 {
        self.entries
            .iter()
            .map(|&(r, c, v)| if r == c { v * m[(r, r)] } else { v * (m[(r, c)] + m[(c, r)]) })
            .sum()
    }

    /// `uᵀ · self · w` for column views `u`, `w`.
    pub fn bilinear(&self, u: &[f64], w: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|&(r, c, v)| if r == c { v * u[r] * w[r] } else { v * (u[r] * w[c] + u[c] * w[r]) })
            .sum()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
            if r != c {
                y[c] += v * x[r];
            }
        }
        y
    }

    pub fn norm_fro_sq(&self) -> f64 {
        self.entries.iter().map(|&(r, c, v)| if r == c { v * v } else { 2.0 * v * v }).sum()
    }

    pub fn trace(&self) -> f64 {
        self.entries.iter().filter(|e| e.0 == e.1).map(|e| e.2).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0_f64, |m, e| m.max(e.2.abs()))
    }

    pub fn scale(&self, alpha: f64) -> SparseSym {
        SparseSym {
            dim: self.dim,
            entries: self.entries.iter().map(|&(r, c, v)| (r, c, alpha * v)).collect(),
        }
    }
}
