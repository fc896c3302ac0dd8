//! Dense diagnostics for small problems: assembled system matrices and the
//! condition-number bound for split preconditioners.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{sym_eig, sym_eigvals, DenseSym, Mat, Vector};
use crate::model::SdpProblem;

use super::SplitBlock;

/// Largest `n` for which dense diagnostics run.
pub const MAX_DIAG_N: usize = 400;

/// `(A_j • Q A_l P)_{jl}` for one block, i.e. `𝐀ᵀ(P ⊗ Q)𝐀`, symmetrized.
pub fn dense_kron_form(prob: &SdpProblem, block: usize, p: &DenseSym, q: &DenseSym) -> Mat {
    let n = prob.n();
    let cons = prob.constraints(block);
    let mut h = Mat::zeros(n, n);
    for (l, al) in cons.iter().enumerate() {
        let t = q.as_mat() * al.to_dense().as_mat() * p.as_mat();
        let t = DenseSym::new(t);
        for (j, aj) in cons.iter().enumerate() {
            h[(j, l)] = aj.dot_dense(t.as_mat());
        }
    }
    DenseSym::new(h).into_mat()
}

/// `P^{-1/2}`, together with the eigenvalues of `P`.
fn inv_sqrt(p: &Mat) -> Result<Mat> {
    let eig = sym_eig(&DenseSym::new(p.clone()))?;
    Ok(eig.map(|l| 1.0 / l.max(f64::MIN_POSITIVE).sqrt()).into_mat())
}

/// Spectral condition number of a symmetric positive definite matrix.
pub fn condition_number(m: &Mat) -> Result<f64> {
    let v = sym_eigvals(&DenseSym::new(m.clone()))?;
    Ok(v[v.len() - 1] / v[0])
}

/// `κ(P^{-1/2} H P^{-1/2})`.
pub fn preconditioned_condition(h: &Mat, p: &Mat) -> Result<f64> {
    let s = inv_sqrt(p)?;
    condition_number(&(&s * h * &s))
}

/// Measured condition number next to its a-priori bound
/// `(1 + Σ ε̄_i) / (1 + Σ ε̲_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionBound {
    pub kappa: f64,
    pub bound: f64,
    pub eps_upper: Vec<f64>,
    pub eps_lower: Vec<f64>,
}

impl ConditionBound {
    pub fn holds(&self, rel_slack: f64) -> bool {
        self.kappa <= self.bound * (1.0 + rel_slack)
    }
}

/// For `H = Σ_i 𝐀_iᵀ(W_i⊗W_i)𝐀_i + L` and the `alpha` preconditioner
/// `P = Σ τ_i² I + L + ṼṼᵀ`, the perturbations `H_i⁰ − τ_i² I` with
/// `H_i⁰ = 𝐀_iᵀ(W_i⁰⊗W_i⁰)𝐀_i` satisfy `H = P + Σ_i (H_i⁰ − τ_i² I)`.
/// `lin` is the (diagonal) linear-block term `L`.
pub fn alpha_condition_bound(
    prob: &SdpProblem,
    w: &[DenseSym],
    splits: &[SplitBlock],
    lin: &Vector,
    p_dense: &Mat,
) -> Result<ConditionBound> {
    let n = prob.n();
    let mut h = Mat::from_diagonal(lin);
    for (i, wi) in w.iter().enumerate() {
        h += dense_kron_form(prob, i, wi, wi);
    }
    let s = inv_sqrt(p_dense)?;
    let mut eps_upper = Vec::with_capacity(splits.len());
    let mut eps_lower = Vec::with_capacity(splits.len());
    for (i, sp) in splits.iter().enumerate() {
        let mut e = dense_kron_form(prob, i, &sp.w0, &sp.w0);
        for d in 0..n {
            e[(d, d)] -= sp.tau * sp.tau;
        }
        let v = sym_eigvals(&DenseSym::new(&s * e * &s))?;
        eps_lower.push(v[0]);
        eps_upper.push(v[v.len() - 1]);
    }
    let kappa = condition_number(&(&s * &h * &s))?;
    let bound = (1.0 + eps_upper.iter().sum::<f64>()) / (1.0 + eps_lower.iter().sum::<f64>());
    Ok(ConditionBound { kappa, bound, eps_upper, eps_lower })
}
