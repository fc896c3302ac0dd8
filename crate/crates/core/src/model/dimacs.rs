use serde::{Deserialize, Serialize};

use crate::linalg::sym_eigvals;

use super::{PrimalDualPoint, SdpProblem};

/// The six normalized DIMACS error measures.
///
/// `err1`/`err2` measure primal feasibility and cone violation of `X`,
/// `err3`/`err4` the same for `(y, S)`, `err5` the relative duality gap and
/// `err6` the relative complementarity `X • S`. Norms follow the usual
/// benchmark conventions: `1 + ‖b‖_∞` and `1 + max |C_ij|` as denominators.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DimacsErrors {
    pub err1: f64,
    pub err2: f64,
    pub err3: f64,
    pub err4: f64,
    pub err5: f64,
    pub err6: f64,
}

impl DimacsErrors {
    pub fn as_array(&self) -> [f64; 6] {
        [self.err1, self.err2, self.err3, self.err4, self.err5, self.err6]
    }

    pub fn max(&self) -> f64 {
        self.as_array().into_iter().fold(0.0, f64::max)
    }
}

/// Smallest eigenvalue over all LMI blocks and the linear part.
pub(crate) fn min_cone_eig(m: &super::BlockSymMatrix) -> f64 {
    let lmi = m
        .blocks
        .iter()
        .map(|b| sym_eigvals(b).map(|v| v[0]).unwrap_or(f64::NEG_INFINITY))
        .fold(f64::INFINITY, f64::min);
    m.lin.iter().copied().fold(lmi, f64::min)
}

pub fn dimacs(prob: &SdpProblem, pt: &PrimalDualPoint) -> DimacsErrors {
    let b_scale = 1.0 + prob.b().amax();
    let c_scale = 1.0 + prob.objective_max_abs();

    let primal_res = prob.apply_a(&pt.x) - prob.b();
    let err1 = primal_res.norm() / b_scale;
    let err2 = (-min_cone_eig(&pt.x)).max(0.0) / b_scale;

    let dual_res = prob.apply_a_adjoint(&pt.y).add_scaled(1.0, &pt.s).sub(&prob.objective_matrix());
    let err3 = dual_res.norm_fro() / c_scale;
    let err4 = (-min_cone_eig(&pt.s)).max(0.0) / c_scale;

    let pobj = prob.primal_objective(&pt.x);
    let dobj = prob.dual_objective(&pt.y);
    let obj_scale = 1.0 + pobj.abs() + dobj.abs();
    let err5 = (pobj - dobj).abs() / obj_scale;
    let err6 = pt.x.dot(&pt.s).abs() / obj_scale;

    DimacsErrors { err1, err2, err3, err4, err5, err6 }
}
