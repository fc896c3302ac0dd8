//! Low-rank preconditioners for the Schur complement and the augmented
//! Lagrangian Hessian.
//!
//! Both system matrices are sums `Σ_i c·𝐀_iᵀ(P_i ⊗ Q_i)𝐀_i + (diagonal)`. When
//! the scaling matrices have a few large eigenvalues, split them as
//! `P = P⁰ + UUᵀ`; the part carrying `U` has rank `≤ m·k` and is kept exactly,
//! the rest is replaced by a cheap base matrix. The inverse of
//! base + `ṼṼᵀ` is applied with the Sherman–Morrison–Woodbury identity.

pub mod diagnostics;
mod split;

pub use split::{detect_rank, spectral_split, tau_loraine, RankHints, SplitBlock, TauRule};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{chol, chol_mat, CholFactor, DenseSym, Mat, Vector};
use crate::model::SdpProblem;
use crate::pcg::LinOp;

/// Largest `n` for which a dense base (`tilde`) is factored.
pub const MAX_DENSE_BASE: usize = 6000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecondKind {
    Alpha,
    Beta,
    Hybrid,
    Tilde,
    Gamma,
    Delta,
    None,
}

impl PrecondKind {
    pub const ALL: [PrecondKind; 7] = [
        PrecondKind::Alpha,
        PrecondKind::Beta,
        PrecondKind::Hybrid,
        PrecondKind::Tilde,
        PrecondKind::Gamma,
        PrecondKind::Delta,
        PrecondKind::None,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PrecondKind::Alpha => "alpha",
            PrecondKind::Beta => "beta",
            PrecondKind::Hybrid => "hybrid",
            PrecondKind::Tilde => "tilde",
            PrecondKind::Gamma => "gamma",
            PrecondKind::Delta => "delta",
            PrecondKind::None => "none",
        }
    }
}

impl fmt::Display for PrecondKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PrecondKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PrecondKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preconditioner {s:?}")))
    }
}

/// The hybrid rule: leave the diagonal preconditioner once the last solve
/// took more than `k·p·√n/10` CG iterations and the iteration index exceeds `√n/60`.
pub fn hybrid_should_switch(n: usize, p: usize, k: usize, iter_index: usize, last_cg_count: usize) -> bool {
    let sqrt_n = (n as f64).sqrt();
    (last_cg_count as f64) > (k * p) as f64 * sqrt_n / 10.0 && (iter_index as f64) > sqrt_n / 60.0
}

/// Base matrix of an SMW preconditioner.
#[derive(Clone, Debug)]
pub enum Base {
    Diagonal(Vector),
    Dense(CholFactor),
}

impl Base {
    fn solve(&self, v: &Vector) -> Vector {
        match self {
            Base::Diagonal(d) => v.component_div(d),
            Base::Dense(f) => f.solve_vec(v),
        }
    }

    fn solve_mat(&self, m: &Mat) -> Mat {
        match self {
            Base::Diagonal(d) => {
                let mut out = m.clone();
                for (i, mut row) in out.row_iter_mut().enumerate() {
                    row /= d[i];
                }
                out
            }
            Base::Dense(f) => f.solve_mat(m),
        }
    }

    pub fn to_dense(&self) -> Mat {
        match self {
            Base::Diagonal(d) => Mat::from_diagonal(d),
            Base::Dense(f) => f.l() * f.l().transpose(),
        }
    }
}

/// `(B + ṼṼᵀ)⁻¹ v = B⁻¹(v − Ṽ Θ⁻¹ Ṽᵀ B⁻¹ v)` with `Θ = I + Ṽᵀ B⁻¹ Ṽ`.
#[derive(Clone, Debug)]
pub struct SmwPreconditioner {
    base: Base,
    v: Mat,
    binv_v: Mat,
    theta: Option<CholFactor>,
}

impl SmwPreconditioner {
    pub fn new(base: Base, v: Mat) -> Result<Self> {
        if let Base::Diagonal(d) = &base {
            if let Some(i) = d.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::Precond(format!("base diagonal entry {i} is {:.3e}", d[i])));
            }
        }
        let binv_v = base.solve_mat(&v);
        let theta = if v.ncols() == 0 {
            None
        } else {
            let mut t = v.transpose() * &binv_v;
            for i in 0..t.nrows() {
                t[(i, i)] += 1.0;
            }
            let t = DenseSym::new(t);
            Some(chol(&t).map_err(|e| Error::Precond(format!("inner Schur complement: {e}")))?)
        };
        Ok(SmwPreconditioner { base, v, binv_v, theta })
    }

    pub fn base(&self) -> &Base {
        &self.base
    }

    /// The low-rank factor `Ṽ` (`n × Σ m_i k_i`).
    pub fn lowrank(&self) -> &Mat {
        &self.v
    }

    pub fn dim(&self) -> usize {
        self.v.nrows()
    }

    /// `B + ṼṼᵀ`, densely.
    pub fn to_dense(&self) -> Mat {
        self.base.to_dense() + &self.v * self.v.transpose()
    }

    pub fn apply_smw_inverse(&self, v: &Vector) -> Vector {
        let u = self.base.solve(v);
        match &self.theta {
            None => u,
            Some(theta) => {
                let t = self.v.tr_mul(&u);
                let z = theta.solve_vec(&t);
                u - &self.binv_v * z
            }
        }
    }
}

/// An applied-inverse preconditioner `P⁻¹`.
#[derive(Clone, Debug)]
pub enum Preconditioner {
    Identity(usize),
    Diagonal(Vector),
    Smw(SmwPreconditioner),
}

impl Preconditioner {
    /// `P` itself, densely (diagnostics only).
    pub fn to_dense(&self) -> Mat {
        match self {
            Preconditioner::Identity(n) => Mat::identity(*n, *n),
            Preconditioner::Diagonal(d) => Mat::from_diagonal(d),
            Preconditioner::Smw(s) => s.to_dense(),
        }
    }
}

impl LinOp for Preconditioner {
    fn dim(&self) -> usize {
        match self {
            Preconditioner::Identity(n) => *n,
            Preconditioner::Diagonal(d) => d.len(),
            Preconditioner::Smw(s) => s.dim(),
        }
    }

    fn apply(&self, x: &Vector) -> Vector {
        match self {
            Preconditioner::Identity(_) => x.clone(),
            Preconditioner::Diagonal(d) => x.component_div(d),
            Preconditioner::Smw(s) => s.apply_smw_inverse(x),
        }
    }
}

/// Columns `scale · l_aᵀ A_j r_c` of `𝐀ᵀ(L ⊗ R)` for one block, ordered `(a, c)`
/// with `c` fastest. `L` is `m × k`, `R` is `m × q`; the result is `n × kq`.
pub fn lowrank_columns(prob: &SdpProblem, block: usize, left: &Mat, right: &Mat, scale: f64) -> Mat {
    let n = prob.n();
    let (k, q) = (left.ncols(), right.ncols());
    let width = k * q;
    let rows: Vec<Vec<f64>> = prob
        .constraints(block)
        .par_iter()
        .map(|a| {
            let mut row = vec![0.0; width];
            for &(r, c, v) in a.entries() {
                for ai in 0..k {
                    let (lr, lc) = (left[(r, ai)], left[(c, ai)]);
                    let dst = &mut row[ai * q..(ai + 1) * q];
                    if r == c {
                        let w = scale * v * lr;
                        if w != 0.0 {
                            for (ci, d) in dst.iter_mut().enumerate() {
                                *d += w * right[(r, ci)];
                            }
                        }
                    } else {
                        let (wr, wc) = (scale * v * lr, scale * v * lc);
                        for (ci, d) in dst.iter_mut().enumerate() {
                            *d += wr * right[(c, ci)] + wc * right[(r, ci)];
                        }
                    }
                }
            }
            row
        })
        .collect();
    let mut out = Mat::zeros(n, width);
    for (j, row) in rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            out[(j, c)] = v;
        }
    }
    out
}

fn hstack(parts: Vec<Mat>, rows: usize) -> Mat {
    let width: usize = parts.iter().map(Mat::ncols).sum();
    let mut out = Mat::zeros(rows, width);
    let mut off = 0;
    for p in parts {
        let w = p.ncols();
        out.columns_mut(off, w).copy_from(&p);
        off += w;
    }
    out
}

fn check_splits(prob: &SdpProblem, splits: &[SplitBlock]) -> Result<()> {
    if splits.len() != prob.num_blocks() {
        return Err(Error::Precond(format!("{} splits for {} blocks", splits.len(), prob.num_blocks())));
    }
    for (i, (s, &m)) in splits.iter().zip(prob.block_dims()).enumerate() {
        if s.dim() != m {
            return Err(Error::Precond(format!("split {i} has dimension {}, block has {m}", s.dim())));
        }
    }
    Ok(())
}

fn check_diag_len(prob: &SdpProblem, diag: &Vector) -> Result<()> {
    if diag.len() != prob.n() {
        return Err(Error::Precond(format!("diagonal term has length {}, expected {}", diag.len(), prob.n())));
    }
    Ok(())
}

fn sum_tau_sq(splits: &[SplitBlock]) -> f64 {
    splits.iter().map(|s| s.tau * s.tau).sum()
}

/// Low-rank factor `[𝐀_iᵀ(U_i ⊗ Γ_i)]_i` with `Γ_iΓ_iᵀ = 2W_i⁰ + U_iU_iᵀ`.
fn alpha_lowrank(prob: &SdpProblem, splits: &[SplitBlock]) -> Result<Mat> {
    let mut parts = Vec::with_capacity(splits.len());
    for (i, s) in splits.iter().enumerate() {
        if s.k == 0 {
            continue;
        }
        let gram = DenseSym::new(s.w0.as_mat() * 2.0 + &s.u * s.u.transpose());
        let gamma = chol(&gram).map_err(|e| Error::Precond(format!("Γ factor of block {i}: {e}")))?;
        parts.push(lowrank_columns(prob, i, &s.u, gamma.l(), 1.0));
    }
    Ok(hstack(parts, prob.n()))
}

/// `A_α + ṼṼᵀ` with `A_α = Σ τ_i² I + diag(lin_diag)`.
pub fn build_h_alpha(prob: &SdpProblem, splits: &[SplitBlock], lin_diag: &Vector) -> Result<SmwPreconditioner> {
    check_splits(prob, splits)?;
    check_diag_len(prob, lin_diag)?;
    let base = lin_diag.add_scalar(sum_tau_sq(splits));
    SmwPreconditioner::new(Base::Diagonal(base), alpha_lowrank(prob, splits)?)
}

/// Diagonal `Σ τ_i² + lin_diag`.
pub fn build_h_beta(splits: &[SplitBlock], lin_diag: &Vector) -> Result<Preconditioner> {
    let d = lin_diag.add_scalar(sum_tau_sq(splits));
    if let Some(i) = d.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::Precond(format!("diagonal preconditioner entry {i} is {:.3e}", d[i])));
    }
    Ok(Preconditioner::Diagonal(d))
}

/// Gram matrix `𝐀_iᵀ𝐀_i` of one block, `(A_j • A_l)_{jl}`.
pub fn constraint_gram(prob: &SdpProblem, block: usize) -> Mat {
    use std::collections::HashMap;
    let n = prob.n();
    let mut by_coord: HashMap<(usize, usize), Vec<(usize, f64)>> = HashMap::new();
    for (j, a) in prob.constraints(block).iter().enumerate() {
        for &(r, c, v) in a.entries() {
            by_coord.entry((r, c)).or_default().push((j, v));
        }
    }
    let mut g = Mat::zeros(n, n);
    for ((r, c), list) in by_coord {
        let w = if r == c { 1.0 } else { 2.0 };
        for &(j, vj) in &list {
            for &(l, vl) in &list {
                g[(j, l)] += w * vj * vl;
            }
        }
    }
    g
}

/// SMW preconditioner with the dense base `Σ τ_i² 𝐀_iᵀ𝐀_i + diag(lin_diag)`.
pub fn build_h_tilde(prob: &SdpProblem, splits: &[SplitBlock], lin_diag: &Vector) -> Result<SmwPreconditioner> {
    check_splits(prob, splits)?;
    check_diag_len(prob, lin_diag)?;
    let n = prob.n();
    if n > MAX_DENSE_BASE {
        return Err(Error::Precond(format!("dense base of order {n} exceeds the limit {MAX_DENSE_BASE}")));
    }
    let mut base = Mat::from_diagonal(lin_diag);
    for (i, s) in splits.iter().enumerate() {
        base += constraint_gram(prob, i) * (s.tau * s.tau);
    }
    let factor = chol_mat(&base).map_err(|e| Error::Precond(format!("dense base: {e}")))?;
    SmwPreconditioner::new(Base::Dense(factor), alpha_lowrank(prob, splits)?)
}

fn diag_base(prob: &SdpProblem, h_lin: &Vector, weights: &[f64]) -> Vector {
    let mut base = h_lin.clone();
    for (i, &w) in weights.iter().enumerate() {
        base.axpy(w, &prob.column_norms_sq(i), 1.0);
    }
    base
}

fn mean_eig(m: &DenseSym) -> f64 {
    m.trace() / m.dim() as f64
}

/// `H_lin + Σ τ¹τ² diag(‖A_j‖²) + 2Σ 𝐀ᵀ(W̃W̃ᵀ ⊗ V)𝐀`, for the augmented Lagrangian
/// Hessian `rI + 2Σ 𝐀ᵀ(W ⊗ V)𝐀 + DᵀW̄D`.
pub fn build_h_gamma(
    prob: &SdpProblem,
    w_splits: &[SplitBlock],
    v_mats: &[DenseSym],
    h_lin: &Vector,
) -> Result<SmwPreconditioner> {
    check_splits(prob, w_splits)?;
    check_diag_len(prob, h_lin)?;
    let mut weights = Vec::with_capacity(w_splits.len());
    let mut parts = Vec::new();
    for (i, (s, v)) in w_splits.iter().zip(v_mats).enumerate() {
        weights.push(10.0 * s.lambda_min() * mean_eig(v));
        if s.k > 0 {
            let delta = chol(v).map_err(|e| Error::Precond(format!("Δ factor of block {i}: {e}")))?;
            parts.push(lowrank_columns(prob, i, &s.u, delta.l(), std::f64::consts::SQRT_2));
        }
    }
    let base = diag_base(prob, h_lin, &weights);
    SmwPreconditioner::new(Base::Diagonal(base), hstack(parts, prob.n()))
}

/// Like [`build_h_gamma`], with `V = V⁰ + ṼṼᵀ` split as well; the exact part is
/// `2Σ 𝐀ᵀ[(W̃⊗Θ)(W̃⊗Θ)ᵀ + (Ṽ⊗Γ)(Ṽ⊗Γ)ᵀ]𝐀` with `ΓΓᵀ = W⁰ + ½W̃W̃ᵀ`,
/// `ΘΘᵀ = V⁰ + ½ṼṼᵀ`.
pub fn build_h_delta(
    prob: &SdpProblem,
    w_splits: &[SplitBlock],
    v_splits: &[SplitBlock],
    h_lin: &Vector,
) -> Result<SmwPreconditioner> {
    check_splits(prob, w_splits)?;
    check_splits(prob, v_splits)?;
    check_diag_len(prob, h_lin)?;
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut weights = Vec::with_capacity(w_splits.len());
    let mut parts = Vec::new();
    for (i, (ws, vs)) in w_splits.iter().zip(v_splits).enumerate() {
        weights.push(10.0 * ws.lambda_min() * mean_eig(&vs.w0));
        if ws.k > 0 {
            let theta = DenseSym::new(vs.w0.as_mat() + &vs.u * vs.u.transpose() * 0.5);
            let theta = chol(&theta).map_err(|e| Error::Precond(format!("Θ factor of block {i}: {e}")))?;
            parts.push(lowrank_columns(prob, i, &ws.u, theta.l(), sqrt2));
        }
        if vs.k > 0 {
            let gamma = DenseSym::new(ws.w0.as_mat() + &ws.u * ws.u.transpose() * 0.5);
            let gamma = chol(&gamma).map_err(|e| Error::Precond(format!("Γ factor of block {i}: {e}")))?;
            parts.push(lowrank_columns(prob, i, &vs.u, gamma.l(), sqrt2));
        }
    }
    let base = diag_base(prob, h_lin, &weights);
    SmwPreconditioner::new(Base::Diagonal(base), hstack(parts, prob.n()))
}

/// Splits every block of a scaling matrix.
pub fn split_all(mats: &[DenseSym], hints: &RankHints, rule: TauRule) -> Result<Vec<SplitBlock>> {
    mats.iter()
        .enumerate()
        .map(|(i, w)| {
            let eig = crate::linalg::sym_eig(w)?;
            let vals: Vec<f64> = eig.values.iter().copied().collect();
            let k = hints.rank_for(i, &vals);
            split::split_from_eig(eig, k, rule)
        })
        .collect()
}
