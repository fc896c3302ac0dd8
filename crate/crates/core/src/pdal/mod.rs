//! Primal-dual augmented Lagrangian method.
//!
//! The constraints are read as `A_i(y) = Σ_j y_j A_j^(i) − C_i ⪯ 0` and
//! `Dy − d ≤ 0`, and `−bᵀy` is minimized. Each LMI is penalized by the
//! hyperbolic penalty through `Z = (πI − A_i(y))⁻¹`, the linear rows by a
//! scalar [`PenaltyFn`]. Inner problems are solved by Newton's method on the
//! primal-dual system `G1 = 0`, `G2 = 0` with a merit line search; the
//! Newton matrix is the Hessian `rI + 2Σ 𝐀ᵀ(X̄⊗Z)𝐀 + DᵀW̄D`, applied
//! matrix-free inside preconditioned CG.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{chol, sym_eig, sym_eigvals, DenseSym, Mat, Vector};
use crate::model::{dimacs, BlockSymMatrix, DimacsErrors, PrimalDualPoint, ProblemDims, SdpProblem};
use crate::pcg::{pcg_solve, CgTolerance, LinOp, PcgReport, DEFAULT_MAXITER};
use crate::precond::diagnostics::{self, MAX_DIAG_N};
use crate::precond::{build_h_delta, build_h_gamma, split_all, PrecondKind, Preconditioner, RankHints, TauRule};
use crate::report::{spectra_of, IterDiagnostics, IterRecord, Solution, SolveReport, SolveStatus, SolverKind, REPORT_SCHEMA};

/// Scalar penalty `φ` with `φ(0) = 0`, `φ'(0) = 1`, increasing, convex, and
/// unbounded as its argument approaches 1 (or extrapolated before that).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltyFn {
    /// `φ(s) = s/(1−s)`, domain `s < 1`.
    Hyperbolic,
    /// `φ(s) = −log(1−s)` for `s ≤ τ`, its second-order Taylor polynomial at
    /// `τ` beyond. `τ ≥ 1` is a pure log barrier with domain `s < 1`.
    Qlog { tau: f64 },
}

impl PenaltyFn {
    pub fn is_barrier(self) -> bool {
        match self {
            PenaltyFn::Hyperbolic => true,
            PenaltyFn::Qlog { tau } => tau >= 1.0,
        }
    }

    /// `(φ(s), φ'(s), φ''(s))`.
    pub fn eval_unscaled(self, s: f64) -> Result<(f64, f64, f64)> {
        match self {
            PenaltyFn::Hyperbolic => {
                if !(s < 1.0) {
                    return Err(Error::Domain(format!("hyperbolic penalty at {s} ≥ 1")));
                }
                let q = 1.0 / (1.0 - s);
                Ok((s * q, q * q, 2.0 * q * q * q))
            }
            PenaltyFn::Qlog { tau } if s <= tau || tau >= 1.0 => {
                if !(s < 1.0) {
                    return Err(Error::Domain(format!("log barrier at {s} ≥ 1")));
                }
                let q = 1.0 / (1.0 - s);
                Ok((-(1.0 - s).ln(), q, q * q))
            }
            PenaltyFn::Qlog { tau } => {
                let q = 1.0 / (1.0 - tau);
                let h = s - tau;
                Ok((-(1.0 - tau).ln() + q * h + 0.5 * q * q * h * h, q + q * q * h, q * q))
            }
        }
    }
}

/// Value and derivatives of `φ_π(t) = π φ(t/π)` with respect to `t`.
pub fn penalty_eval(f: PenaltyFn, t: f64, pi: f64) -> Result<(f64, f64, f64)> {
    if !(pi > 0.0) {
        return Err(Error::Domain(format!("penalty parameter {pi} must be positive")));
    }
    let (v, d1, d2) = f.eval_unscaled(t / pi)?;
    Ok((pi * v, d1, d2 / pi))
}

/// `A_i(y) = Σ_j y_j A_j^(i) − C_i`.
pub fn lmi_value(prob: &SdpProblem, block: usize, y: &Vector) -> DenseSym {
    let mut a = prob.adjoint_block(block, y).into_mat();
    prob.objective(block).add_to(&mut a, -1.0);
    DenseSym::new(a)
}

/// `Z_i = (πI − A_i(y))⁻¹` per block; fails outside the penalty domain.
pub fn z_matrix(prob: &SdpProblem, y: &Vector, pi: f64) -> Result<Vec<DenseSym>> {
    (0..prob.num_blocks())
        .into_par_iter()
        .map(|i| {
            let shifted = lmi_value(prob, i, y).scale(-1.0).add_diagonal(pi);
            chol(&shifted)
                .map(|f| f.inverse())
                .map_err(|_| Error::Domain(format!("A_{i}(y) is not below πI = {pi:.3e}·I")))
        })
        .collect()
}

/// `X̄ = π² Z X Z`.
pub fn multiplier_update_lmi(z: &DenseSym, x: &DenseSym, pi: f64) -> DenseSym {
    DenseSym::new(z.as_mat() * x.as_mat() * z.as_mat() * (pi * pi))
}

/// `x̄_k = x_k φ'_π((Dy − d)_k)`.
pub fn multiplier_update_lin(prob: &SdpProblem, y: &Vector, x_lin: &Vector, pi: f64, f: PenaltyFn) -> Result<Vector> {
    let t = prob.lin().mul(y) - prob.lin_rhs();
    let mut out = Vector::zeros(t.len());
    for k in 0..t.len() {
        out[k] = x_lin[k] * penalty_eval(f, t[k], pi)?.1;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdalConfig {
    pub pi_lin_min: f64,
    pub pi_lmi_min: f64,
    pub pi_lin_upd: f64,
    pub pi_lmi_upd: f64,
    pub gamma_lin: f64,
    pub gamma_lmi: f64,
    /// Proximal regularization; also the floor of the Hessian spectrum.
    pub r: f64,
    /// Outer tolerance on the primal-dual error.
    pub eps: f64,
    pub eps_dimacs: f64,
    /// Floor of the inner merit tolerance `ε_k = max(floor, 0.01·e²)`.
    pub eps_inner_floor: f64,
    pub lin_penalty: PenaltyFn,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Cap on the total number of Newton steps.
    pub max_newton: usize,
    pub precond: PrecondKind,
    pub rank_hints: RankHints,
    pub tau_rule: TauRule,
    pub cg: CgTolerance,
    pub cg_maxiter: usize,
    pub diagnostics: bool,
}

impl PdalConfig {
    /// Parameters for compliance-only truss problems.
    pub fn tru() -> Self {
        PdalConfig {
            pi_lin_min: 1e-9,
            pi_lmi_min: 1e-5,
            pi_lin_upd: 0.5,
            pi_lmi_upd: 0.5,
            gamma_lin: 0.5,
            gamma_lmi: 0.5,
            r: 0.01,
            eps: 1e-6,
            eps_dimacs: 1e-5,
            eps_inner_floor: 1e-14,
            lin_penalty: PenaltyFn::Qlog { tau: 0.5 },
            max_outer: 200,
            max_inner: 100,
            max_newton: 1000,
            precond: PrecondKind::Gamma,
            rank_hints: RankHints::default(),
            tau_rule: TauRule::Loraine,
            cg: CgTolerance::default(),
            cg_maxiter: DEFAULT_MAXITER,
            diagnostics: false,
        }
    }

    /// Parameters for problems with a vibration constraint.
    pub fn vib() -> Self {
        PdalConfig {
            pi_lin_min: 1e-11,
            pi_lin_upd: 0.3,
            pi_lmi_upd: 0.3,
            gamma_lin: 1.0,
            gamma_lmi: 0.8,
            ..PdalConfig::tru()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit_open = |v: f64| v > 0.0 && v < 1.0;
        let unit_closed = |v: f64| (0.0..=1.0).contains(&v);
        if !(unit_open(self.pi_lin_upd) && unit_open(self.pi_lmi_upd)) {
            return Err(Error::Config("penalty update factors must lie in (0, 1)".into()));
        }
        if !(unit_closed(self.gamma_lin) && unit_closed(self.gamma_lmi)) {
            return Err(Error::Config("damping factors must lie in [0, 1]".into()));
        }
        if !(self.pi_lin_min > 0.0 && self.pi_lmi_min > 0.0) {
            return Err(Error::Config("penalty minima must be positive".into()));
        }
        if !(self.r > 0.0) {
            return Err(Error::Config(format!("regularization r = {} must be positive", self.r)));
        }
        if let PenaltyFn::Qlog { tau } = self.lin_penalty {
            if !(tau > 0.0) {
                return Err(Error::Config(format!("qlog threshold {tau} must be positive")));
            }
        }
        if !matches!(self.precond, PrecondKind::Gamma | PrecondKind::Delta | PrecondKind::None) {
            return Err(Error::Config(format!(
                "preconditioner {} targets the interior-point system; use gamma, delta or none",
                self.precond
            )));
        }
        Ok(())
    }
}

impl Default for PdalConfig {
    fn default() -> Self {
        PdalConfig::tru()
    }
}

/// Outer iterate: multipliers, penalties and proximal center.
#[derive(Clone, Debug)]
pub struct PdalState {
    pub y_bar: Vector,
    pub x: Vec<DenseSym>,
    pub x_lin: Vector,
    pub pi_lmi: f64,
    pub pi_lin: f64,
    pub r: f64,
    pub lin_penalty: PenaltyFn,
}

impl PdalState {
    /// `X = I`, `x = 1`, `y = 0`, `π_lin = 1`, `π_lmi = 1.1·max(1, λ_max(A(0)))`.
    pub fn initial(prob: &SdpProblem, cfg: &PdalConfig) -> Result<Self> {
        let y = Vector::zeros(prob.n());
        let lam = lmi_lambda_max(prob, &y)?;
        let mut pi_lin: f64 = 1.0;
        if cfg.lin_penalty.is_barrier() {
            pi_lin = pi_lin.max(1.01 * lin_violation(prob, &y));
        }
        Ok(PdalState {
            y_bar: y,
            x: prob.block_dims().iter().map(|&m| DenseSym::identity(m)).collect(),
            x_lin: Vector::from_element(prob.num_lin(), 1.0),
            pi_lmi: 1.1 * lam.max(1.0),
            pi_lin,
            r: cfg.r,
            lin_penalty: cfg.lin_penalty,
        })
    }
}

/// Largest eigenvalue of `A_i(y)` over all blocks.
pub fn lmi_lambda_max(prob: &SdpProblem, y: &Vector) -> Result<f64> {
    let mut lam = f64::NEG_INFINITY;
    for i in 0..prob.num_blocks() {
        let v = sym_eigvals(&lmi_value(prob, i, y))?;
        lam = lam.max(v[v.len() - 1]);
    }
    Ok(lam)
}

/// `max_k (Dy − d)_k`, or `−∞` without linear constraints.
fn lin_violation(prob: &SdpProblem, y: &Vector) -> f64 {
    (prob.lin().mul(y) - prob.lin_rhs()).iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Everything the penalty contributes at one `y`.
#[derive(Clone, Debug)]
pub struct PenaltyEval {
    pub z: Vec<DenseSym>,
    /// `π² Z X Z`.
    pub x_bar: Vec<DenseSym>,
    pub x_bar_lin: Vector,
    /// `x φ''_π(t)`.
    pub w_lin: Vector,
    /// `Σ X•(π²Z − πI) + Σ x φ_π(t)`.
    pub value: f64,
}

pub fn penalty_at(prob: &SdpProblem, state: &PdalState, y: &Vector) -> Result<PenaltyEval> {
    let z = z_matrix(prob, y, state.pi_lmi)?;
    let pi = state.pi_lmi;
    let mut value = 0.0;
    let mut x_bar = Vec::with_capacity(z.len());
    for (zi, xi) in z.iter().zip(&state.x) {
        value += pi * pi * zi.dot(xi) - pi * xi.trace();
        x_bar.push(multiplier_update_lmi(zi, xi, pi));
    }
    let t = prob.lin().mul(y) - prob.lin_rhs();
    let mut x_bar_lin = Vector::zeros(t.len());
    let mut w_lin = Vector::zeros(t.len());
    for k in 0..t.len() {
        let (v, d1, d2) = penalty_eval(state.lin_penalty, t[k], state.pi_lin)?;
        let xk = state.x_lin[k];
        value += xk * v;
        x_bar_lin[k] = xk * d1;
        w_lin[k] = xk * d2;
    }
    Ok(PenaltyEval { z, x_bar, x_bar_lin, w_lin, value })
}

/// `F(y) = −bᵀy + r/2‖y − ȳ‖² + penalty`.
pub fn aug_lagrangian_value(prob: &SdpProblem, state: &PdalState, y: &Vector) -> Result<f64> {
    let ev = penalty_at(prob, state, y)?;
    Ok(-prob.b().dot(y) + 0.5 * state.r * (y - &state.y_bar).norm_squared() + ev.value)
}

fn grad_from_eval(prob: &SdpProblem, state: &PdalState, ev: &PenaltyEval, y: &Vector) -> Vector {
    let mut g = -prob.b() + (y - &state.y_bar) * state.r + prob.lin().tr_mul(&ev.x_bar_lin);
    for (i, xb) in ev.x_bar.iter().enumerate() {
        g += prob.apply_block(i, xb);
    }
    g
}

/// `∇F(y) = b̃ + r(y − ȳ) + 𝒜(X̄(y)) + Dᵀx̄(y)`.
pub fn aug_lagrangian_grad(prob: &SdpProblem, state: &PdalState, y: &Vector) -> Result<Vector> {
    let ev = penalty_at(prob, state, y)?;
    Ok(grad_from_eval(prob, state, &ev, y))
}

/// `X̄ A₀(dy) Z + Z A₀(dy) X̄` per block: the derivative of `X̄` along `dy`.
fn x_bar_derivative(prob: &SdpProblem, ev: &PenaltyEval, dy: &Vector) -> Vec<DenseSym> {
    (0..prob.num_blocks())
        .into_par_iter()
        .map(|i| {
            let m = prob.adjoint_block(i, dy);
            DenseSym::new(ev.x_bar[i].as_mat() * m.as_mat() * ev.z[i].as_mat()).scale(2.0)
        })
        .collect()
}

/// `r dy + Σ 𝒜_i(X̄ A₀(dy) Z + Z A₀(dy) X̄) + Dᵀ(w̄ ∘ D dy)`.
pub fn hessian_matvec(prob: &SdpProblem, state: &PdalState, ev: &PenaltyEval, dy: &Vector) -> Vector {
    let mut out = dy * state.r + prob.lin().weighted_gram_mul(&ev.w_lin, dy);
    for (i, d) in x_bar_derivative(prob, ev, dy).iter().enumerate() {
        out += prob.apply_block(i, d);
    }
    out
}

pub struct HessianOp<'a> {
    pub prob: &'a SdpProblem,
    pub state: &'a PdalState,
    pub eval: &'a PenaltyEval,
}

impl LinOp for HessianOp<'_> {
    fn dim(&self) -> usize {
        self.prob.n()
    }
    fn apply(&self, x: &Vector) -> Vector {
        hessian_matvec(self.prob, self.state, self.eval, x)
    }
}

/// Dense `rI + 2Σ 𝐀ᵀ(X̄⊗Z)𝐀 + DᵀW̄D` (diagnostics and tests).
pub fn dense_hessian(prob: &SdpProblem, state: &PdalState, ev: &PenaltyEval) -> Mat {
    let d = prob.lin().to_dense();
    let mut h = d.transpose() * Mat::from_diagonal(&ev.w_lin) * d;
    for i in 0..h.nrows() {
        h[(i, i)] += state.r;
    }
    for i in 0..prob.num_blocks() {
        h += diagnostics::dense_kron_form(prob, i, &ev.x_bar[i], &ev.z[i]) * 2.0;
    }
    h
}

/// Inner iterate `(ŷ, X̂, x̂)`.
#[derive(Clone, Debug)]
pub struct PdIterate {
    pub y: Vector,
    pub x: Vec<DenseSym>,
    pub x_lin: Vector,
}

impl PdIterate {
    fn step(&self, alpha: f64, dir: &PdIterate) -> PdIterate {
        PdIterate {
            y: &self.y + &dir.y * alpha,
            x: self.x.iter().zip(&dir.x).map(|(x, d)| x.add_scaled(alpha, d)).collect(),
            x_lin: &self.x_lin + &dir.x_lin * alpha,
        }
    }

    /// `X̂ ≻ 0` and `x̂ > 0`.
    pub fn multipliers_positive(&self) -> bool {
        self.x_lin.iter().all(|&v| v > 0.0) && self.x.iter().all(|x| chol(x).is_ok())
    }

    /// Primal-dual point with `S = C − 𝒜*(y)`, `s = d − Dy`.
    pub fn to_point(&self, prob: &SdpProblem) -> PrimalDualPoint {
        let s = prob.objective_matrix().sub(&prob.apply_a_adjoint(&self.y));
        PrimalDualPoint { y: self.y.clone(), x: BlockSymMatrix { blocks: self.x.clone(), lin: self.x_lin.clone() }, s }
    }
}

#[derive(Clone, Debug)]
pub struct PdResiduals {
    /// `b̃ + r(ŷ − ȳ) + 𝒜(X̂) + Dᵀx̂`.
    pub g1: Vector,
    /// `X̂ − X̄(ŷ)` per block.
    pub g2: Vec<DenseSym>,
    /// `x̂ − x̄(ŷ)`.
    pub g2_lin: Vector,
}

impl PdResiduals {
    pub fn g2_norm_sq(&self) -> f64 {
        self.g2.iter().map(|g| g.dot(g)).sum::<f64>() + self.g2_lin.norm_squared()
    }
}

pub fn pd_residuals(prob: &SdpProblem, state: &PdalState, ev: &PenaltyEval, it: &PdIterate) -> PdResiduals {
    let mut g1 = -prob.b() + (&it.y - &state.y_bar) * state.r + prob.lin().tr_mul(&it.x_lin);
    for (i, x) in it.x.iter().enumerate() {
        g1 += prob.apply_block(i, x);
    }
    let g2 = it.x.iter().zip(&ev.x_bar).map(|(x, xb)| x.add_scaled(-1.0, xb)).collect();
    PdResiduals { g1, g2, g2_lin: &it.x_lin - &ev.x_bar_lin }
}

/// `½(‖G1‖² + ‖G2‖²)`.
pub fn merit(res: &PdResiduals) -> f64 {
    0.5 * (res.g1.norm_squared() + res.g2_norm_sq())
}

/// Directional derivative of the merit function along `dir`.
pub fn merit_dderiv(prob: &SdpProblem, state: &PdalState, ev: &PenaltyEval, res: &PdResiduals, dir: &PdIterate) -> f64 {
    let mut dg1 = &dir.y * state.r + prob.lin().tr_mul(&dir.x_lin);
    for (i, dx) in dir.x.iter().enumerate() {
        dg1 += prob.apply_block(i, dx);
    }
    let dxb = x_bar_derivative(prob, ev, &dir.y);
    let mut out = res.g1.dot(&dg1);
    for ((g2, dx), d) in res.g2.iter().zip(&dir.x).zip(&dxb) {
        out += g2.dot(&dx.add_scaled(-1.0, d));
    }
    let dxb_lin = ev.w_lin.component_mul(&prob.lin().mul(&dir.y));
    out + res.g2_lin.dot(&(&dir.x_lin - dxb_lin))
}

/// Solves `H Δy = −∇F` by PCG and evaluates `ΔX̂ = −X̂ + X̄ + X̄A₀(Δy)Z + ZA₀(Δy)X̄`,
/// `Δx̂ = −x̂ + x̄ + w̄∘DΔy`.
pub fn pd_newton_step(
    prob: &SdpProblem,
    state: &PdalState,
    ev: &PenaltyEval,
    it: &PdIterate,
    pc: &dyn LinOp,
    tol: f64,
    maxiter: usize,
) -> Result<(PdIterate, PcgReport)> {
    let grad = grad_from_eval(prob, state, ev, &it.y);
    let op = HessianOp { prob, state, eval: ev };
    let (dy, rep) = pcg_solve(&op, pc, &-grad, &Vector::zeros(prob.n()), tol, maxiter);
    rep.check()?;
    Ok((newton_multipliers(prob, ev, it, dy), rep))
}

fn newton_multipliers(prob: &SdpProblem, ev: &PenaltyEval, it: &PdIterate, dy: Vector) -> PdIterate {
    let dxb = x_bar_derivative(prob, ev, &dy);
    let x = it
        .x
        .iter()
        .zip(&ev.x_bar)
        .zip(&dxb)
        .map(|((x, xb), d)| xb.add_scaled(-1.0, x).add_scaled(1.0, d))
        .collect();
    let x_lin = &ev.x_bar_lin - &it.x_lin + ev.w_lin.component_mul(&prob.lin().mul(&dy));
    PdIterate { y: dy, x, x_lin }
}

fn build_precond(prob: &SdpProblem, state: &PdalState, ev: &PenaltyEval, cfg: &PdalConfig) -> Result<Preconditioner> {
    if cfg.precond == PrecondKind::None {
        return Ok(Preconditioner::Identity(prob.n()));
    }
    let h_lin = prob.lin().weighted_gram_diag(&ev.w_lin).add_scalar(state.r);
    let w: Vec<DenseSym> = ev
        .x_bar
        .iter()
        .map(|x| if chol(x).is_ok() { Ok(x.clone()) } else { floor_spectrum(x, SPECTRUM_FLOOR) })
        .collect::<Result<_>>()?;
    let w_splits = split_all(&w, &cfg.rank_hints, cfg.tau_rule)?;
    let built = match cfg.precond {
        PrecondKind::Delta => {
            let v_splits = split_all(&ev.z, &cfg.rank_hints, cfg.tau_rule)?;
            build_h_delta(prob, &w_splits, &v_splits, &h_lin)
        }
        _ => build_h_gamma(prob, &w_splits, &ev.z, &h_lin),
    };
    match built {
        Ok(p) => Ok(Preconditioner::Smw(p)),
        Err(e) => {
            log::warn!("{} setup failed ({e}); using the diagonal of the linear part", cfg.precond);
            Ok(Preconditioner::Diagonal(h_lin))
        }
    }
}

fn pdal_diagnostics(prob: &SdpProblem, state: &PdalState, ev: &PenaltyEval, pc: &Preconditioner) -> Result<IterDiagnostics> {
    let h = dense_hessian(prob, state, ev);
    let n = prob.n();
    let probe = Vector::from_iterator(n, (0..n).map(|j| ((j + 1) as f64).cos()));
    let dense = &h * &probe;
    let mismatch = (hessian_matvec(prob, state, ev, &probe) - &dense).norm() / dense.norm().max(f64::MIN_POSITIVE);
    let min_eig = sym_eigvals(&DenseSym::new(h.clone()))?[0];
    let kappa = match pc {
        Preconditioner::Identity(_) => None,
        p => diagnostics::preconditioned_condition(&h, &p.to_dense()).ok(),
    };
    Ok(IterDiagnostics {
        kappa,
        kappa_bound: None,
        kappa_unpreconditioned: diagnostics::condition_number(&h).ok(),
        operator_mismatch: Some(mismatch),
        min_eig: Some(min_eig),
    })
}

/// Primal-dual error: the largest DIMACS measure at the inner iterate.
pub fn pd_error(prob: &SdpProblem, it: &PdIterate) -> DimacsErrors {
    dimacs(prob, &it.to_point(prob))
}

/// Result of one inner solve.
#[derive(Clone, Debug)]
pub struct InnerOutcome {
    pub iterate: PdIterate,
    pub newton_steps: usize,
    pub early_stop: bool,
    pub merit: f64,
}

/// Shared counters across inner solves.
pub struct InnerContext<'a> {
    pub cg_tol: CgTolerance,
    pub trace: &'a mut Vec<IterRecord>,
    pub outer: usize,
    pub newton_budget: usize,
}

/// Newton's method on `G1 = 0`, `G2 = 0` from `(ȳ, X, x)`, stopping at `M ≤ ε`
/// with positive multipliers or at the early-stopping test against `e_outer`.
pub fn inner_solve(
    prob: &SdpProblem,
    state: &PdalState,
    cfg: &PdalConfig,
    eps: f64,
    e_outer: f64,
    ctx: &mut InnerContext<'_>,
) -> Result<InnerOutcome> {
    let mut it = PdIterate { y: state.y_bar.clone(), x: state.x.clone(), x_lin: state.x_lin.clone() };
    let mut ev = penalty_at(prob, state, &it.y)?;
    for l in 0..=cfg.max_inner {
        let res = pd_residuals(prob, state, &ev, &it);
        let m = merit(&res);
        if m <= eps {
            // `X̂ = X̄(ŷ)` to within the merit; `X̄ = π²ZXZ` is semidefinite by construction
            // while `X̂` can lose definiteness to rounding near rank-deficient optima.
            it.x = ev.x_bar.clone();
            it.x_lin = ev.x_bar_lin.clone();
            return Ok(InnerOutcome { iterate: it, newton_steps: l, early_stop: false, merit: m });
        }
        let positive = it.multipliers_positive();
        let grad = grad_from_eval(prob, state, &ev, &it.y);
        if l > 0 && positive {
            let e = pd_error(prob, &it).max();
            if e < 0.5 * e_outer
                && res.g2_norm_sq() < 0.1
                && res.g1.norm_squared() < 0.05 * grad.norm().max(1.0)
            {
                return Ok(InnerOutcome { iterate: it, newton_steps: l, early_stop: true, merit: m });
            }
        }
        if l == cfg.max_inner || ctx.newton_budget == 0 {
            break;
        }
        ctx.newton_budget -= 1;

        let t0 = Instant::now();
        let pc = build_precond(prob, state, &ev, cfg)?;
        let diag = if cfg.diagnostics && prob.n() <= MAX_DIAG_N {
            Some(pdal_diagnostics(prob, state, &ev, &pc)?)
        } else {
            None
        };
        let tol = ctx.cg_tol.current;
        let (dir, rep) = pd_newton_step(prob, state, &ev, &it, &pc, tol, cfg.cg_maxiter)?;
        ctx.cg_tol = ctx.cg_tol.next_tolerance();

        let mut slope = merit_dderiv(prob, state, &ev, &res, &dir);
        if !(slope < 0.0) {
            log::debug!("merit slope {slope:.3e} is not negative; using the exact-Newton value");
            slope = -2.0 * m;
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=40 {
            let trial = it.step(alpha, &dir);
            if let Ok(ev_t) = penalty_at(prob, state, &trial.y) {
                let m_t = merit(&pd_residuals(prob, state, &ev_t, &trial));
                if m_t <= m + 0.05 * alpha * slope {
                    accepted = Some((trial, ev_t));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let (next, ev_next) = accepted.ok_or_else(|| {
            Error::LineSearch(format!("no sufficient merit decrease after 40 halvings (merit {m:.3e})"))
        })?;
        it = next;
        ev = ev_next;

        ctx.trace.push(IterRecord {
            iter: ctx.trace.len() + 1,
            dimacs_max: pd_error(prob, &it).max(),
            objective: -prob.dual_objective(&it.y),
            cg: rep.iterations,
            cg_tol: tol,
            precond: cfg.precond.name().to_owned(),
            time_s: t0.elapsed().as_secs_f64(),
            alpha: Some(alpha),
            pi_lmi: Some(state.pi_lmi),
            pi_lin: Some(state.pi_lin),
            inner_iterations: Some(l + 1),
            outer: Some(ctx.outer),
            diagnostics: diag,
            ..IterRecord::default()
        });
    }
    let m = merit(&pd_residuals(prob, state, &ev, &it));
    Err(Error::LineSearch(format!(
        "inner solve stopped without convergence (merit {m:.3e}, outer iteration {})",
        ctx.outer
    )))
}

/// `π_lin ← max(π_min, upd·π_lin)`, `π_lmi ← max(π_min, upd·π_lmi, 1.01·λ_max(A(y)))`.
/// A barrier on the linear rows additionally keeps `π_lin > max(Dy − d)`.
pub fn penalty_update(state: &mut PdalState, cfg: &PdalConfig, lambda_max: f64, lin_max: f64) {
    state.pi_lin = cfg.pi_lin_min.max(cfg.pi_lin_upd * state.pi_lin);
    if state.lin_penalty.is_barrier() {
        state.pi_lin = state.pi_lin.max(1.01 * lin_max);
    }
    state.pi_lmi = cfg.pi_lmi_min.max(cfg.pi_lmi_upd * state.pi_lmi).max(1.01 * lambda_max);
}

const SPECTRUM_FLOOR: f64 = 1e-14;

/// Lifts eigenvalues below `rel·λ_max` to that level. Near a rank-deficient optimum,
/// rounding can leave the damped multiplier a few ulps indefinite.
fn floor_spectrum(x: &DenseSym, rel: f64) -> Result<DenseSym> {
    let eig = sym_eig(x)?;
    let floor = rel * eig.max().max(f64::MIN_POSITIVE);
    Ok(eig.map(|l| l.max(floor)))
}

/// Runs the augmented Lagrangian method from [`PdalState::initial`].
pub fn pdal_solve(prob: &SdpProblem, cfg: &PdalConfig) -> Result<Solution> {
    cfg.validate()?;
    let start = Instant::now();
    let mut state = PdalState::initial(prob, cfg)?;
    let mut trace = Vec::new();
    let mut cg_tol = cfg.cg;
    let mut budget = cfg.max_newton;
    let mut current = PdIterate { y: state.y_bar.clone(), x: state.x.clone(), x_lin: state.x_lin.clone() };
    let mut message = None;

    let status = 'outer: {
        for outer in 1..=cfg.max_outer {
            let e_outer = pd_error(prob, &current).max();
            let eps_k = cfg.eps_inner_floor.max(0.01 * e_outer * e_outer);
            let mut ctx = InnerContext { cg_tol, trace: &mut trace, outer, newton_budget: budget };
            let inner = inner_solve(prob, &state, cfg, eps_k, e_outer, &mut ctx);
            cg_tol = ctx.cg_tol;
            budget = ctx.newton_budget;
            let inner = match inner {
                Ok(o) => o,
                Err(e) => {
                    log::warn!("augmented Lagrangian inner solve failed: {e}");
                    message = Some(e.to_string());
                    break 'outer if budget == 0 { SolveStatus::IterationLimit } else { SolveStatus::Failed };
                }
            };
            if let Some(last) = trace.last_mut() {
                last.early_stop = Some(inner.early_stop);
            }
            current = inner.iterate;
            let errs = pd_error(prob, &current);
            if errs.max() <= cfg.eps_dimacs || errs.max() < cfg.eps {
                break 'outer SolveStatus::Converged;
            }

            let (gl, gm) = (cfg.gamma_lin, cfg.gamma_lmi);
            for (x, xh) in state.x.iter_mut().zip(&current.x) {
                *x = x.scale(1.0 - gm).add_scaled(gm, xh);
                if chol(x).is_err() {
                    match floor_spectrum(x, SPECTRUM_FLOOR) {
                        Ok(lifted) => *x = lifted,
                        Err(e) => {
                            message = Some(e.to_string());
                            break 'outer SolveStatus::Failed;
                        }
                    }
                }
            }
            state.x_lin = &state.x_lin * (1.0 - gl) + &current.x_lin * gl;
            state.y_bar = current.y.clone();
            let lam = match lmi_lambda_max(prob, &state.y_bar) {
                Ok(l) => l,
                Err(e) => {
                    message = Some(e.to_string());
                    break 'outer SolveStatus::Failed;
                }
            };
            let lin_max = lin_violation(prob, &state.y_bar);
            penalty_update(&mut state, cfg, lam, lin_max);
            current.x = state.x.clone();
            current.x_lin = state.x_lin.clone();
        }
        SolveStatus::IterationLimit
    };

    let point = current.to_point(prob);
    let errs = dimacs(prob, &point);
    let report = SolveReport {
        schema: REPORT_SCHEMA,
        solver: SolverKind::Pdal,
        precond: cfg.precond,
        problem: ProblemDims::from(prob),
        status,
        message,
        iterations: trace.len(),
        cg_total: trace.iter().map(|r| r.cg).sum(),
        cg_per_iteration: trace.iter().map(|r| r.cg).collect(),
        wall_time_s: start.elapsed().as_secs_f64(),
        dimacs: errs,
        primal_objective: prob.primal_objective(&point.x),
        dual_objective: prob.dual_objective(&point.y),
        objective: -prob.dual_objective(&point.y),
        spectra: spectra_of(&point),
        trace,
    };
    Ok(Solution { point, report })
}
