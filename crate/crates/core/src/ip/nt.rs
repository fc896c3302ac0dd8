use crate::error::{Error, Result};
use crate::linalg::{chol, DenseSym, Mat, Vector};

/// Nesterov–Todd scaling of one block: `W S W = X`, `W = G Gᵀ`,
/// `GᵀSG = G⁻¹XG⁻ᵀ = diag(d)`.
#[derive(Clone, Debug)]
pub struct NtScaling {
    pub w: DenseSym,
    pub g: Mat,
    pub g_inv: Mat,
    pub d: Vector,
}

impl NtScaling {
    /// `S⁻¹ = G diag(d)⁻¹ Gᵀ`.
    pub fn s_inverse(&self) -> DenseSym {
        let mut gd = self.g.clone();
        for (j, &dj) in self.d.iter().enumerate() {
            gd.column_mut(j).scale_mut(1.0 / dj);
        }
        DenseSym::new(gd * self.g.transpose())
    }

    /// `G M Gᵀ`.
    pub fn unscale(&self, m: &DenseSym) -> DenseSym {
        DenseSym::new(&self.g * m.as_mat() * self.g.transpose())
    }
}

/// NT scaling from `X = LLᵀ`, `S = RRᵀ` and the SVD `RᵀL = UΣVᵀ`:
/// `G = L V Σ^{-1/2}`, `d = Σ`.
pub fn nt_scaling(x: &DenseSym, s: &DenseSym) -> Result<NtScaling> {
    let lx = chol(x)?;
    let rs = chol(s)?;
    let m = rs.l().transpose() * lx.l();
    let svd = m.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::StepRepair("SVD of the NT cross factor failed".into()))?;
    let sigma = svd.singular_values;
    if let Some(i) = sigma.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::ZeroDivisor { row: i, col: i });
    }
    let mut v_scaled = v_t.transpose();
    for (j, &sj) in sigma.iter().enumerate() {
        v_scaled.column_mut(j).scale_mut(1.0 / sj.sqrt());
    }
    let g = lx.l() * &v_scaled;
    // G⁻¹ = Σ^{1/2} Vᵀ L⁻¹
    let mut g_inv = lx.backward(&v_t.transpose()).transpose();
    for (i, &si) in sigma.iter().enumerate() {
        g_inv.row_mut(i).scale_mut(si.sqrt());
    }
    let w = DenseSym::new(&g * g.transpose());
    Ok(NtScaling { w, g, g_inv, d: sigma })
}

/// `R_NT = −(G⁻¹ δX δS G + Gᵀ δS δX G⁻ᵀ) ./ (d eᵀ + e dᵀ)`.
pub fn second_order_correction(g: &Mat, dx: &DenseSym, ds: &DenseSym, d: &Vector) -> Result<DenseSym> {
    let g_inv = g
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::StepRepair("singular NT factor".into()))?;
    second_order_correction_with_inverse(g, &g_inv, dx, ds, d)
}

pub(crate) fn second_order_correction_with_inverse(
    g: &Mat,
    g_inv: &Mat,
    dx: &DenseSym,
    ds: &DenseSym,
    d: &Vector,
) -> Result<DenseSym> {
    let t = g_inv * dx.as_mat() * ds.as_mat() * g;
    let m = d.len();
    let mut r = Mat::zeros(m, m);
    for j in 0..m {
        for i in 0..m {
            let den = d[i] + d[j];
            if !(den > 0.0) {
                return Err(Error::ZeroDivisor { row: i, col: j });
            }
            r[(i, j)] = -(t[(i, j)] + t[(j, i)]) / den;
        }
    }
    Ok(DenseSym::new(r))
}
