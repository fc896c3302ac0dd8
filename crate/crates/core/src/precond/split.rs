use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, DenseSym, EigDecomp, Mat};

/// How the split threshold `τ` is chosen from the ascending spectrum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauRule {
    /// `τ = λ_1 + ½·mean(λ_1, …, λ_{m−k})`.
    #[default]
    Loraine,
    /// `τ = λ_1`.
    MinEig,
}

/// `τ = λ_1 + ½·mean(λ_1, …, λ_{m−k})` for an ascending spectrum.
pub fn tau_loraine(eigs: &[f64], k: usize) -> f64 {
    let m = eigs.len();
    assert!(m > k, "need more eigenvalues than outliers");
    let small = &eigs[..m - k];
    eigs[0] + 0.5 * small.iter().sum::<f64>() / small.len() as f64
}

/// Expected outlier counts per block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankHints {
    /// Per-block `k_i`; the last entry is reused for further blocks.
    pub ranks: Vec<usize>,
    /// Choose `k_i` from the spectrum instead (eigenvalues above 100× the median).
    pub auto_detect: bool,
}

impl Default for RankHints {
    fn default() -> Self {
        RankHints { ranks: vec![1], auto_detect: false }
    }
}

impl RankHints {
    pub fn uniform(k: usize) -> Self {
        RankHints { ranks: vec![k], auto_detect: false }
    }

    pub fn hint(&self, block: usize) -> usize {
        self.ranks.get(block).or(self.ranks.last()).copied().unwrap_or(1)
    }

    /// Outlier count for a block with ascending spectrum `eigs`, clamped to `< m`.
    pub fn rank_for(&self, block: usize, eigs: &[f64]) -> usize {
        let m = eigs.len();
        let k = if self.auto_detect { detect_rank(eigs) } else { self.hint(block) };
        k.min(m.saturating_sub(1))
    }
}

/// Number of eigenvalues larger than 100× the median, at least 1.
pub fn detect_rank(eigs: &[f64]) -> usize {
    let median = eigs[eigs.len() / 2];
    eigs.iter().filter(|&&l| l > 100.0 * median).count().max(1)
}

/// One block of `W = W0 + U Uᵀ`.
#[derive(Clone, Debug)]
pub struct SplitBlock {
    pub w0: DenseSym,
    /// `m × k`, columns `v_l·(λ_l − τ)^{1/2}` for the top `k` eigenpairs.
    pub u: Mat,
    pub tau: f64,
    pub k: usize,
    /// `τ` had to be pulled below `λ_{m−k}`: no spectral gap yet.
    pub degenerate: bool,
    pub eig: EigDecomp,
}

impl SplitBlock {
    pub fn dim(&self) -> usize {
        self.w0.dim()
    }

    /// `W0 + U Uᵀ`.
    pub fn reconstruct(&self) -> DenseSym {
        DenseSym::new(self.w0.as_mat() + &self.u * self.u.transpose())
    }

    pub fn lambda_min(&self) -> f64 {
        self.eig.min()
    }
}

/// Splits the `k` largest eigenvalues off a positive definite `w`.
pub fn spectral_split(w: &DenseSym, k: usize, rule: TauRule) -> Result<SplitBlock> {
    if k >= w.dim() {
        return Err(Error::Precond(format!("outlier count {k} must be below the block size {}", w.dim())));
    }
    let eig = sym_eig(w)?;
    split_from_eig(eig, k, rule)
}

pub(crate) fn split_from_eig(eig: EigDecomp, k: usize, rule: TauRule) -> Result<SplitBlock> {
    let m = eig.dim();
    if k >= m {
        return Err(Error::Precond(format!("outlier count {k} must be below the block size {m}")));
    }
    let vals: Vec<f64> = eig.values.iter().copied().collect();
    let mut tau = match rule {
        TauRule::Loraine => tau_loraine(&vals, k),
        TauRule::MinEig => vals[0],
    };
    let mut degenerate = false;
    if k > 0 {
        let ceiling = vals[m - k - 1];
        if tau >= ceiling {
            let pulled = ceiling * (1.0 - 1e-8);
            log::debug!("degenerate split: tau {tau:.3e} >= lambda_(m-k) {ceiling:.3e}, using {pulled:.3e}");
            tau = pulled;
            degenerate = true;
        }
    }
    if !(tau > 0.0) {
        return Err(Error::Precond(format!("split threshold {tau:.3e} is not positive")));
    }

    let mut w0_scaled = eig.vectors.clone();
    for (j, &l) in vals.iter().enumerate() {
        let v = if j >= m - k { tau } else { l };
        w0_scaled.column_mut(j).scale_mut(v);
    }
    let w0 = DenseSym::new(w0_scaled * eig.vectors.transpose());
    let mut u = Mat::zeros(m, k);
    for (c, j) in (m - k..m).enumerate() {
        let s = (vals[j] - tau).max(0.0).sqrt();
        u.set_column(c, &(eig.vectors.column(j) * s));
    }
    Ok(SplitBlock { w0, u, tau, k, degenerate, eig })
}
