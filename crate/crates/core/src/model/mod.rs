//! Multi-block SDP data, the constraint operator and its adjoint.
//!
//! One canonical in-memory form serves both solvers. The primal view is
//!
//! ```text
//! min  Σ_i C_i • X_i + dᵀ x_lin
//! s.t. Σ_i A_j^(i) • X_i + (Dᵀ x_lin)_j = b_j,   X_i ⪰ 0, x_lin ≥ 0
//! ```
//!
//! and the dual view is `max bᵀy` subject to `Σ_j y_j A_j^(i) + S_i = C_i`,
//! `D y + s_lin = d`. The augmented Lagrangian solver works on the same data
//! as the matrix inequality `Σ_j y_j A_j − C ⪯ 0`.

mod dimacs;
mod sdpa;

pub use dimacs::{dimacs, DimacsErrors};
pub use sdpa::{load_sdpa, parse_sdpa, write_sdpa, write_sdpa_to};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseSym, Mat, SparseSym, Vector};

/// Sparse `ν × n` matrix of the explicit linear constraints, row-sorted.
#[derive(Clone, Debug, PartialEq)]
pub struct LinMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl LinMatrix {
    pub fn new(rows: usize, cols: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut entries: Vec<_> = triplets.into_iter().collect();
        for &(r, c, v) in &entries {
            if r >= rows || c >= cols {
                return Err(Error::InvalidSparse(format!("linear entry ({r}, {c}) outside {rows}x{cols}")));
            }
            if !v.is_finite() {
                return Err(Error::InvalidSparse(format!("non-finite linear entry {v}")));
            }
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        if let Some(w) = entries.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::InvalidSparse(format!("duplicate linear coordinate ({}, {})", w[0].0, w[0].1)));
        }
        Ok(LinMatrix { rows, cols, entries })
    }

    pub fn empty(cols: usize) -> Self {
        LinMatrix { rows: 0, cols, entries: Vec::new() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// `D y`.
    pub fn mul(&self, y: &Vector) -> Vector {
        let mut out = Vector::zeros(self.rows);
        for &(r, c, v) in &self.entries {
            out[r] += v * y[c];
        }
        out
    }

    /// `Dᵀ z`.
    pub fn tr_mul(&self, z: &Vector) -> Vector {
        let mut out = Vector::zeros(self.cols);
        for &(r, c, v) in &self.entries {
            out[c] += v * z[r];
        }
        out
    }

    /// `Dᵀ diag(w) D v`.
    pub fn weighted_gram_mul(&self, w: &Vector, v: &Vector) -> Vector {
        let dv = self.mul(v);
        self.tr_mul(&dv.component_mul(w))
    }

    /// Diagonal of `Dᵀ diag(w) D`.
    pub fn weighted_gram_diag(&self, w: &Vector) -> Vector {
        let mut out = Vector::zeros(self.cols);
        for &(r, c, v) in &self.entries {
            out[c] += w[r] * v * v;
        }
        out
    }

    /// Whether `Dᵀ diag(w) D` is diagonal for every `w` (each row touches one column).
    pub fn gram_is_diagonal(&self) -> bool {
        let mut seen = vec![usize::MAX; self.rows];
        for &(r, c, _) in &self.entries {
            if seen[r] != usize::MAX && seen[r] != c {
                return false;
            }
            seen[r] = c;
        }
        true
    }

    pub fn to_dense(&self) -> Mat {
        let mut m = Mat::zeros(self.rows, self.cols);
        for &(r, c, v) in &self.entries {
            m[(r, c)] = v;
        }
        m
    }
}

/// A multi-block SDP with explicit linear constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct SdpProblem {
    block_dims: Vec<usize>,
    /// `constraints[i][j]` is `A_j` restricted to block `i`.
    constraints: Vec<Vec<SparseSym>>,
    objective: Vec<SparseSym>,
    b: Vector,
    lin: LinMatrix,
    lin_rhs: Vector,
}

impl SdpProblem {
    pub fn new(
        constraints: Vec<Vec<SparseSym>>,
        objective: Vec<SparseSym>,
        b: Vector,
        lin: LinMatrix,
        lin_rhs: Vector,
    ) -> Result<Self> {
        let n = b.len();
        if n == 0 {
            return Err(Error::InvalidProblem("no constraints".into()));
        }
        if constraints.len() != objective.len() {
            return Err(Error::InvalidProblem(format!(
                "{} constraint blocks but {} objective blocks",
                constraints.len(),
                objective.len()
            )));
        }
        let mut block_dims = Vec::with_capacity(objective.len());
        for (i, (cons, c)) in constraints.iter().zip(&objective).enumerate() {
            let m = c.dim();
            if m == 0 {
                return Err(Error::InvalidProblem(format!("block {i} has dimension 0")));
            }
            if cons.len() != n {
                return Err(Error::InvalidProblem(format!("block {i} has {} constraint matrices, expected {n}", cons.len())));
            }
            if let Some(j) = cons.iter().position(|a| a.dim() != m) {
                return Err(Error::InvalidProblem(format!("A_{j} in block {i} has the wrong dimension")));
            }
            if cons.iter().all(SparseSym::is_structurally_zero) {
                return Err(Error::InvalidProblem(format!("block {i} has no nonzero constraint matrix")));
            }
            block_dims.push(m);
        }
        if lin.cols() != n || lin.rows() != lin_rhs.len() {
            return Err(Error::InvalidProblem(format!(
                "linear block is {}x{} with {} right-hand sides, expected {n} columns",
                lin.rows(),
                lin.cols(),
                lin_rhs.len()
            )));
        }
        let max_m = block_dims.iter().copied().max().unwrap_or(0);
        if n <= max_m {
            log::warn!("n = {n} is not much larger than the largest block ({max_m}); low-rank preconditioning targets n >> m");
        }
        Ok(SdpProblem { block_dims, constraints, objective, b, lin, lin_rhs })
    }

    /// Number of constraints `n` (length of `y`).
    pub fn n(&self) -> usize {
        self.b.len()
    }

    /// Number of LMI blocks `p`.
    pub fn num_blocks(&self) -> usize {
        self.block_dims.len()
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.block_dims
    }

    /// Number of explicit linear constraints `ν`.
    pub fn num_lin(&self) -> usize {
        self.lin.rows()
    }

    pub fn constraints(&self, block: usize) -> &[SparseSym] {
        &self.constraints[block]
    }

    pub fn objective(&self, block: usize) -> &SparseSym {
        &self.objective[block]
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }

    pub fn lin(&self) -> &LinMatrix {
        &self.lin
    }

    pub fn lin_rhs(&self) -> &Vector {
        &self.lin_rhs
    }

    /// `Σ_i m_i + ν`, the barrier parameter normalization.
    pub fn total_dim(&self) -> usize {
        self.block_dims.iter().sum::<usize>() + self.num_lin()
    }

    /// Block `i` of `A*(y) = Σ_j y_j A_j^(i)`.
    pub fn adjoint_block(&self, block: usize, y: &Vector) -> DenseSym {
        let m = self.block_dims[block];
        let mut out = Mat::zeros(m, m);
        for (a, &yj) in self.constraints[block].iter().zip(y.iter()) {
            if yj != 0.0 {
                a.add_to(&mut out, yj);
            }
        }
        DenseSym::new(out)
    }

    /// `(A_j^(i) • M)_j` for one block.
    pub fn apply_block(&self, block: usize, m: &DenseSym) -> Vector {
        let mm = m.as_mat();
        Vector::from_iterator(self.n(), self.constraints[block].iter().map(|a| a.dot_dense(mm)))
    }

    /// `𝒜(M)_j = Σ_i A_j^(i) • M_i + (Dᵀ m_lin)_j`.
    pub fn apply_a(&self, m: &BlockSymMatrix) -> Vector {
        let mut out = self.lin.tr_mul(&m.lin);
        for (i, mi) in m.blocks.iter().enumerate() {
            out += self.apply_block(i, mi);
        }
        out
    }

    /// `𝒜*(y)`: blocks `Σ_j y_j A_j^(i)` and linear part `D y`.
    pub fn apply_a_adjoint(&self, y: &Vector) -> BlockSymMatrix {
        BlockSymMatrix {
            blocks: (0..self.num_blocks()).map(|i| self.adjoint_block(i, y)).collect(),
            lin: self.lin.mul(y),
        }
    }

    /// Objective `C` as a block matrix with the linear part `d`.
    pub fn objective_matrix(&self) -> BlockSymMatrix {
        BlockSymMatrix {
            blocks: self.objective.iter().map(SparseSym::to_dense).collect(),
            lin: self.lin_rhs.clone(),
        }
    }

    /// `C • X + dᵀ x_lin`.
    pub fn primal_objective(&self, x: &BlockSymMatrix) -> f64 {
        let lmi: f64 = self.objective.iter().zip(&x.blocks).map(|(c, xi)| c.dot_dense(xi.as_mat())).sum();
        lmi + self.lin_rhs.dot(&x.lin)
    }

    /// `bᵀ y`.
    pub fn dual_objective(&self, y: &Vector) -> f64 {
        self.b.dot(y)
    }

    /// Largest absolute entry over `C` and `d`.
    pub fn objective_max_abs(&self) -> f64 {
        let c = self.objective.iter().fold(0.0_f64, |m, c| m.max(c.max_abs()));
        c.max(self.lin_rhs.amax())
    }

    /// Per-block squared column norms of the stacked operator, `‖A_j^(i)‖_F²`.
    pub fn column_norms_sq(&self, block: usize) -> Vector {
        Vector::from_iterator(self.n(), self.constraints[block].iter().map(SparseSym::norm_fro_sq))
    }
}

/// Block-diagonal symmetric matrix: dense LMI blocks plus a diagonal linear part.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSymMatrix {
    pub blocks: Vec<DenseSym>,
    pub lin: Vector,
}

impl BlockSymMatrix {
    pub fn zeros(prob: &SdpProblem) -> Self {
        BlockSymMatrix {
            blocks: prob.block_dims().iter().map(|&m| DenseSym::zeros(m)).collect(),
            lin: Vector::zeros(prob.num_lin()),
        }
    }

    pub fn scaled_identity(prob: &SdpProblem, alpha: f64) -> Self {
        BlockSymMatrix {
            blocks: prob.block_dims().iter().map(|&m| DenseSym::scaled_identity(m, alpha)).collect(),
            lin: Vector::from_element(prob.num_lin(), alpha),
        }
    }

    pub fn dot(&self, other: &BlockSymMatrix) -> f64 {
        let lmi: f64 = self.blocks.iter().zip(&other.blocks).map(|(a, b)| a.dot(b)).sum();
        lmi + self.lin.dot(&other.lin)
    }

    pub fn norm_fro(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, alpha: f64) -> Self {
        BlockSymMatrix {
            blocks: self.blocks.iter().map(|b| b.scale(alpha)).collect(),
            lin: &self.lin * alpha,
        }
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &BlockSymMatrix) -> Self {
        BlockSymMatrix {
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a.add_scaled(alpha, b)).collect(),
            lin: &self.lin + &other.lin * alpha,
        }
    }

    pub fn sub(&self, other: &BlockSymMatrix) -> Self {
        self.add_scaled(-1.0, other)
    }
}

/// Iterate of a primal-dual method: `(y, X, S)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimalDualPoint {
    pub y: Vector,
    pub x: BlockSymMatrix,
    pub s: BlockSymMatrix,
}

impl PrimalDualPoint {
    pub fn zeros(prob: &SdpProblem) -> Self {
        PrimalDualPoint {
            y: Vector::zeros(prob.n()),
            x: BlockSymMatrix::zeros(prob),
            s: BlockSymMatrix::zeros(prob),
        }
    }
}

/// Problem dimensions as reported next to results.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemDims {
    pub n: usize,
    pub block_dims: Vec<usize>,
    pub num_lin: usize,
}

impl From<&SdpProblem> for ProblemDims {
    fn from(p: &SdpProblem) -> Self {
        ProblemDims { n: p.n(), block_dims: p.block_dims().to_vec(), num_lin: p.num_lin() }
    }
}
