//! Preconditioned conjugate gradients on abstract symmetric operators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Default iteration cap for one linear system.
pub const DEFAULT_MAXITER: usize = 100_000;

/// The recursive residual is replaced by the true residual this often.
const RESIDUAL_REFRESH: usize = 50;

/// A symmetric linear map on `R^n`.
pub trait LinOp {
    fn dim(&self) -> usize;
    fn apply(&self, x: &Vector) -> Vector;
}

/// Wraps a closure as a [`LinOp`].
pub struct FnOp<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&Vector) -> Vector> FnOp<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnOp { dim, f }
    }
}

impl<F: Fn(&Vector) -> Vector> LinOp for FnOp<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &Vector) -> Vector {
        (self.f)(x)
    }
}

/// The identity map, i.e. no preconditioning.
pub struct Identity(pub usize);

impl LinOp for Identity {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &Vector) -> Vector {
        x.clone()
    }
}

impl<T: LinOp + ?Sized> LinOp for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, x: &Vector) -> Vector {
        (**self).apply(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PcgStatus {
    Converged,
    MaxIter,
    /// `pᵀAp ≤ 0` or `rᵀz ≤ 0`: the operator or preconditioner is not SPD.
    Breakdown,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcgReport {
    pub iterations: usize,
    /// True relative residual `‖A x − b‖ / ‖b‖` at exit.
    pub residual: f64,
    pub status: PcgStatus,
}

impl PcgReport {
    pub fn breakdown(&self) -> bool {
        self.status == PcgStatus::Breakdown
    }

    /// Turns a non-converged report into an error.
    pub fn check(&self) -> Result<()> {
        let reason = match self.status {
            PcgStatus::Converged => return Ok(()),
            PcgStatus::MaxIter => "hit the iteration cap",
            PcgStatus::Breakdown => "broke down",
        };
        Err(Error::Pcg { reason, iterations: self.iterations, residual: self.residual })
    }
}

/// Solves `op · x = rhs` to relative residual `tol`.
///
/// Always returns the last iterate; the report says whether it converged.
pub fn pcg_solve(
    op: &dyn LinOp,
    precond_inv: &dyn LinOp,
    rhs: &Vector,
    x0: &Vector,
    tol: f64,
    maxiter: usize,
) -> (Vector, PcgReport) {
    let n = op.dim();
    assert_eq!(rhs.len(), n, "right-hand side length");
    assert_eq!(precond_inv.dim(), n, "preconditioner dimension");
    let bnorm = rhs.norm();
    if bnorm == 0.0 {
        return (Vector::zeros(n), PcgReport { iterations: 0, residual: 0.0, status: PcgStatus::Converged });
    }

    let mut x = x0.clone();
    let mut r = rhs - op.apply(&x);
    let mut rel = r.norm() / bnorm;
    if rel <= tol {
        return (x, PcgReport { iterations: 0, residual: rel, status: PcgStatus::Converged });
    }
    let mut z = precond_inv.apply(&r);
    let mut rz = r.dot(&z);
    if !(rz > 0.0) {
        return (x, PcgReport { iterations: 0, residual: rel, status: PcgStatus::Breakdown });
    }
    let mut p = z.clone();

    for it in 1..=maxiter {
        let ap = op.apply(&p);
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return (x, PcgReport { iterations: it - 1, residual: rel, status: PcgStatus::Breakdown });
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p, 1.0);
        if it % RESIDUAL_REFRESH == 0 {
            r = rhs - op.apply(&x);
        } else {
            r.axpy(-alpha, &ap, 1.0);
        }
        rel = r.norm() / bnorm;
        if rel <= tol {
            let true_rel = (rhs - op.apply(&x)).norm() / bnorm;
            if true_rel <= tol {
                return (x, PcgReport { iterations: it, residual: true_rel, status: PcgStatus::Converged });
            }
            r = rhs - op.apply(&x);
            rel = true_rel;
        }
        z = precond_inv.apply(&r);
        let rz_new = r.dot(&z);
        if !(rz_new > 0.0) {
            return (x, PcgReport { iterations: it, residual: rel, status: PcgStatus::Breakdown });
        }
        p = &z + &p * (rz_new / rz);
        rz = rz_new;
    }
    (x, PcgReport { iterations: maxiter, residual: rel, status: PcgStatus::MaxIter })
}

/// Adaptive CG tolerance: halved after every major iteration down to a floor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgTolerance {
    pub current: f64,
    pub floor: f64,
    pub decay: f64,
}

impl Default for CgTolerance {
    fn default() -> Self {
        CgTolerance { current: 0.01, floor: 1e-6, decay: 0.5 }
    }
}

impl CgTolerance {
    pub fn next_tolerance(self) -> CgTolerance {
        CgTolerance { current: (self.current * self.decay).max(self.floor), ..self }
    }
}
