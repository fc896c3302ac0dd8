//! Primal-dual predictor-corrector interior-point method with NT scaling.
//!
//! Each iteration solves the Schur complement system
//! `H Δy = r`, `H = Σ_i 𝐀_iᵀ(W_i ⊗ W_i)𝐀_i + Dᵀ diag(x/s) D`, twice (predictor
//! and corrector) by preconditioned CG. `H` is never formed: a product costs
//! one sandwich `W (Σ_j Δy_j A_j) W` per block.

mod nt;

pub use nt::{nt_scaling, second_order_correction, NtScaling};

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{chol, min_eig_pencil, sandwich, DenseSym, Vector};
use crate::model::{dimacs, BlockSymMatrix, PrimalDualPoint, ProblemDims, SdpProblem};
use crate::pcg::{pcg_solve, CgTolerance, LinOp, PcgReport, DEFAULT_MAXITER};
use crate::precond::diagnostics::{self, alpha_condition_bound, MAX_DIAG_N};
use crate::precond::{
    build_h_alpha, build_h_beta, build_h_tilde, hybrid_should_switch, split_all, PrecondKind, Preconditioner,
    RankHints, SplitBlock, TauRule,
};
use crate::report::{spectra_of, IterDiagnostics, IterRecord, Solution, SolveReport, SolveStatus, SolverKind, REPORT_SCHEMA};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IpConfig {
    /// Fraction of the distance to the boundary taken by a step.
    pub tau_frac: f64,
    pub sigma_exponent: f64,
    pub eps_dimacs: f64,
    pub max_iter: usize,
    pub rank_hints: RankHints,
    pub tau_rule: TauRule,
    pub precond: PrecondKind,
    pub cg: CgTolerance,
    pub cg_maxiter: usize,
    /// Record dense condition numbers and operator checks (only for `n ≤ 400`).
    pub diagnostics: bool,
}

impl Default for IpConfig {
    fn default() -> Self {
        IpConfig {
            tau_frac: 0.9,
            sigma_exponent: 3.0,
            eps_dimacs: 1e-5,
            max_iter: 200,
            rank_hints: RankHints::default(),
            tau_rule: TauRule::Loraine,
            precond: PrecondKind::Hybrid,
            cg: CgTolerance::default(),
            cg_maxiter: DEFAULT_MAXITER,
            diagnostics: false,
        }
    }
}

/// Current iterate with its scaling.
#[derive(Clone, Debug)]
pub struct IpState {
    pub point: PrimalDualPoint,
    pub mu: f64,
    pub iteration: usize,
    pub nt: Vec<NtScaling>,
    /// `x_lin ./ s_lin`.
    pub lin_scale: Vector,
}

impl IpState {
    pub fn new(prob: &SdpProblem, point: PrimalDualPoint, iteration: usize) -> Result<Self> {
        let nt = point
            .x
            .blocks
            .iter()
            .zip(&point.s.blocks)
            .map(|(x, s)| nt_scaling(x, s))
            .collect::<Result<Vec<_>>>()?;
        let lin_scale = point.x.lin.component_div(&point.s.lin);
        let mu = point.x.dot(&point.s) / prob.total_dim() as f64;
        Ok(IpState { point, mu, iteration, nt, lin_scale })
    }

    pub fn w_blocks(&self) -> Vec<DenseSym> {
        self.nt.iter().map(|s| s.w.clone()).collect()
    }
}

/// Scale-aware identity start: `X = ζ I`, `S = η I` per block, `y = 0`.
pub fn initial_point(prob: &SdpProblem) -> PrimalDualPoint {
    let b = prob.b();
    let mut x_blocks = Vec::with_capacity(prob.num_blocks());
    let mut s_blocks = Vec::with_capacity(prob.num_blocks());
    for (i, &m) in prob.block_dims().iter().enumerate() {
        let mf = m as f64;
        let norms: Vec<f64> = prob.constraints(i).iter().map(|a| a.norm_fro_sq().sqrt()).collect();
        let ratio = norms
            .iter()
            .zip(b.iter())
            .map(|(na, bj)| (1.0 + bj.abs()) / (1.0 + na))
            .fold(0.0_f64, f64::max);
        let zeta = 10.0_f64.max(mf.sqrt()).max(mf * ratio);
        let c_norm = prob.objective(i).norm_fro_sq().sqrt();
        let a_norm = norms.iter().copied().fold(0.0_f64, f64::max);
        let eta = 10.0_f64.max(mf.sqrt()).max(c_norm.max(a_norm));
        x_blocks.push(DenseSym::scaled_identity(m, zeta));
        s_blocks.push(DenseSym::scaled_identity(m, eta));
    }
    let nu = prob.num_lin();
    let (x_lin, s_lin) = if nu == 0 {
        (Vector::zeros(0), Vector::zeros(0))
    } else {
        let nuf = nu as f64;
        let mut col_norm_sq = vec![0.0; prob.n()];
        for &(_, c, v) in prob.lin().entries() {
            col_norm_sq[c] += v * v;
        }
        let ratio = col_norm_sq
            .iter()
            .zip(b.iter())
            .map(|(na, bj)| (1.0 + bj.abs()) / (1.0 + na.sqrt()))
            .fold(0.0_f64, f64::max);
        let zeta = 10.0_f64.max(nuf.sqrt()).max(nuf * ratio);
        let a_norm = col_norm_sq.iter().copied().fold(0.0_f64, f64::max).sqrt();
        let eta = 10.0_f64.max(nuf.sqrt()).max(prob.lin_rhs().norm().max(a_norm));
        (Vector::from_element(nu, zeta), Vector::from_element(nu, eta))
    };
    PrimalDualPoint {
        y: Vector::zeros(prob.n()),
        x: BlockSymMatrix { blocks: x_blocks, lin: x_lin },
        s: BlockSymMatrix { blocks: s_blocks, lin: s_lin },
    }
}

/// `H dy`, one sandwich per block plus the diagonal linear term.
pub fn schur_matvec(prob: &SdpProblem, state: &IpState, dy: &Vector) -> Vector {
    let parts: Vec<Vector> = (0..prob.num_blocks())
        .into_par_iter()
        .map(|i| {
            let m = prob.adjoint_block(i, dy);
            prob.apply_block(i, &sandwich(&state.nt[i].w, &m))
        })
        .collect();
    let mut out = prob.lin().weighted_gram_mul(&state.lin_scale, dy);
    for p in parts {
        out += p;
    }
    out
}

/// The Schur complement as a [`LinOp`].
pub struct SchurOp<'a> {
    pub prob: &'a SdpProblem,
    pub state: &'a IpState,
}

impl LinOp for SchurOp<'_> {
    fn dim(&self) -> usize {
        self.prob.n()
    }
    fn apply(&self, x: &Vector) -> Vector {
        schur_matvec(self.prob, self.state, x)
    }
}

/// Dense `H` (diagnostics and tests).
pub fn dense_schur(prob: &SdpProblem, state: &IpState) -> crate::linalg::Mat {
    let mut h = prob.lin().to_dense().transpose() * crate::linalg::Mat::from_diagonal(&state.lin_scale) * prob.lin().to_dense();
    for (i, s) in state.nt.iter().enumerate() {
        h += diagnostics::dense_kron_form(prob, i, &s.w, &s.w);
    }
    h
}

/// Primal residual `r_p = b − 𝒜(X)` and dual residual `R_d = C − S − 𝒜*(y)`.
#[derive(Clone, Debug)]
pub struct Residuals {
    pub rp: Vector,
    pub rd: BlockSymMatrix,
}

pub fn residuals(prob: &SdpProblem, pt: &PrimalDualPoint) -> Residuals {
    let rp = prob.b() - prob.apply_a(&pt.x);
    let rd = prob.objective_matrix().sub(&pt.s).sub(&prob.apply_a_adjoint(&pt.y));
    Residuals { rp, rd }
}

/// Right-hand side `T` of the scaled complementarity equation
/// `ΔX + W ΔS W = T` (and `Δx + (x/s) Δs = t` on the linear block).
#[derive(Clone, Debug)]
pub struct ComplTarget {
    pub blocks: Vec<DenseSym>,
    pub lin: Vector,
}

impl ComplTarget {
    /// Affine scaling direction: `T = −X`.
    pub fn predictor(state: &IpState) -> Self {
        ComplTarget {
            blocks: state.point.x.blocks.iter().map(|x| x.scale(-1.0)).collect(),
            lin: -&state.point.x.lin,
        }
    }

    /// `T = σμS⁻¹ − X + G R_NT Gᵀ` with the second-order term from the predictor.
    pub fn corrector(state: &IpState, sigma_mu: f64, dx: &BlockSymMatrix, ds: &BlockSymMatrix) -> Result<Self> {
        let mut blocks = Vec::with_capacity(state.nt.len());
        for (i, nt) in state.nt.iter().enumerate() {
            let rnt = nt::second_order_correction_with_inverse(&nt.g, &nt.g_inv, &dx.blocks[i], &ds.blocks[i], &nt.d)?;
            let t = nt
                .s_inverse()
                .scale(sigma_mu)
                .add_scaled(-1.0, &state.point.x.blocks[i])
                .add_scaled(1.0, &nt.unscale(&rnt));
            blocks.push(t);
        }
        let (x, s) = (&state.point.x.lin, &state.point.s.lin);
        let lin = Vector::from_iterator(
            x.len(),
            (0..x.len()).map(|k| (sigma_mu - dx.lin[k] * ds.lin[k]) / s[k] - x[k]),
        );
        Ok(ComplTarget { blocks, lin })
    }
}

/// `r = r_p + 𝒜(W R_d W − T)` on the blocks, `+ Dᵀ((x/s)∘r_d − t)` on the linear part.
pub fn rhs_for_target(prob: &SdpProblem, state: &IpState, res: &Residuals, target: &ComplTarget) -> Vector {
    let mut r = res.rp.clone();
    for (i, nt) in state.nt.iter().enumerate() {
        let m = sandwich(&nt.w, &res.rd.blocks[i]).add_scaled(-1.0, &target.blocks[i]);
        r += prob.apply_block(i, &m);
    }
    let lin = res.rd.lin.component_mul(&state.lin_scale) - &target.lin;
    r + prob.lin().tr_mul(&lin)
}

/// `r_p + 𝒜(W R_d W + W S W)`.
pub fn rhs_predictor(prob: &SdpProblem, state: &IpState) -> Vector {
    let res = residuals(prob, &state.point);
    rhs_for_target(prob, state, &res, &ComplTarget::predictor(state))
}

/// `r_p + 𝒜(W R_d W + W S W − σμS⁻¹ − G R_NT Gᵀ)`.
pub fn rhs_corrector(
    prob: &SdpProblem,
    state: &IpState,
    sigma: f64,
    mu: f64,
    dx: &BlockSymMatrix,
    ds: &BlockSymMatrix,
) -> Result<Vector> {
    let res = residuals(prob, &state.point);
    Ok(rhs_for_target(prob, state, &res, &ComplTarget::corrector(state, sigma * mu, dx, ds)?))
}

/// `ΔS = R_d − 𝒜*(Δy)` and `ΔX = T − W ΔS W` (symmetrized).
pub fn recover_directions(
    prob: &SdpProblem,
    state: &IpState,
    res: &Residuals,
    target: &ComplTarget,
    dy: &Vector,
) -> (BlockSymMatrix, BlockSymMatrix) {
    let ds = res.rd.sub(&prob.apply_a_adjoint(dy));
    let dx_blocks = state
        .nt
        .iter()
        .enumerate()
        .map(|(i, nt)| target.blocks[i].add_scaled(-1.0, &sandwich(&nt.w, &ds.blocks[i])))
        .collect();
    let dx_lin = &target.lin - ds.lin.component_mul(&state.lin_scale);
    (BlockSymMatrix { blocks: dx_blocks, lin: dx_lin }, ds)
}

/// Largest step `≤ 1` keeping `M + step·ΔM` inside the cone by the margin `tau_frac`.
fn max_step(m: &BlockSymMatrix, dm: &BlockSymMatrix, tau_frac: f64) -> Result<f64> {
    let mut lam = f64::INFINITY;
    for (b, db) in m.blocks.iter().zip(&dm.blocks) {
        lam = lam.min(min_eig_pencil(b, db)?);
    }
    for (v, dv) in m.lin.iter().zip(dm.lin.iter()) {
        lam = lam.min(dv / v);
    }
    Ok(if lam < 0.0 { (-tau_frac / lam).min(1.0) } else { 1.0 })
}

/// `α = min(1, −τ/λ_min(X⁻¹ΔX))`, `β` likewise for `S`.
pub fn step_lengths(state: &IpState, dx: &BlockSymMatrix, ds: &BlockSymMatrix, tau_frac: f64) -> Result<(f64, f64)> {
    Ok((max_step(&state.point.x, dx, tau_frac)?, max_step(&state.point.s, ds, tau_frac)?))
}

fn is_interior(m: &BlockSymMatrix) -> bool {
    m.lin.iter().all(|&v| v > 0.0) && m.blocks.iter().all(|b| chol(b).is_ok())
}

/// `M + step·ΔM`, halving the step (at most 10 times) until the result is interior.
fn interior_update(m: &BlockSymMatrix, dm: &BlockSymMatrix, step: f64) -> Result<(BlockSymMatrix, f64)> {
    let mut step = step;
    for _ in 0..=10 {
        let cand = m.add_scaled(step, dm);
        if is_interior(&cand) {
            return Ok((cand, step));
        }
        step *= 0.5;
    }
    Err(Error::StepRepair("iterate left the cone after 10 step halvings".into()))
}

fn build_precond(
    kind: PrecondKind,
    prob: &SdpProblem,
    state: &IpState,
    cfg: &IpConfig,
) -> Result<(Preconditioner, Option<Vec<SplitBlock>>)> {
    let n = prob.n();
    if kind == PrecondKind::None {
        return Ok((Preconditioner::Identity(n), None));
    }
    let lin_diag = prob.lin().weighted_gram_diag(&state.lin_scale);
    let splits = split_all(&state.w_blocks(), &cfg.rank_hints, cfg.tau_rule)?;
    let pc = match kind {
        PrecondKind::Beta => build_h_beta(&splits, &lin_diag)?,
        PrecondKind::Alpha => match build_h_alpha(prob, &splits, &lin_diag) {
            Ok(p) => Preconditioner::Smw(p),
            Err(e) => {
                log::warn!("H_alpha setup failed ({e}); using the diagonal preconditioner for this iteration");
                build_h_beta(&splits, &lin_diag)?
            }
        },
        PrecondKind::Tilde => Preconditioner::Smw(build_h_tilde(prob, &splits, &lin_diag)?),
        other => return Err(Error::Config(format!("preconditioner {other} is not available for the interior-point solver"))),
    };
    Ok((pc, Some(splits)))
}

fn run_diagnostics(prob: &SdpProblem, state: &IpState, cfg: &IpConfig) -> Result<IterDiagnostics> {
    let h = dense_schur(prob, state);
    let n = prob.n();
    let probe = Vector::from_iterator(n, (0..n).map(|j| ((j + 1) as f64).sin()));
    let dense = &h * &probe;
    let mismatch = (schur_matvec(prob, state, &probe) - &dense).norm() / dense.norm().max(f64::MIN_POSITIVE);
    let lin_diag = prob.lin().weighted_gram_diag(&state.lin_scale);
    let splits = split_all(&state.w_blocks(), &cfg.rank_hints, cfg.tau_rule)?;
    let p = build_h_alpha(prob, &splits, &lin_diag)?;
    let bound = alpha_condition_bound(prob, &state.w_blocks(), &splits, &lin_diag, &p.to_dense())?;
    Ok(IterDiagnostics {
        kappa: Some(bound.kappa),
        kappa_bound: Some(bound.bound),
        kappa_unpreconditioned: diagnostics::condition_number(&h).ok(),
        operator_mismatch: Some(mismatch),
        min_eig: None,
    })
}

struct Hybrid {
    switched: bool,
}

/// Solves `H Δy = rhs`. A breakdown under a low-rank preconditioner (its SMW
/// inverse loses definiteness once `τ` is tiny) is retried once with `fallback`,
/// which then replaces `pc` for the rest of the iteration.
fn solve_system(
    op: &SchurOp<'_>,
    pc: &mut Preconditioner,
    fallback: &dyn Fn() -> Result<Preconditioner>,
    rhs: &Vector,
    tol: f64,
    maxiter: usize,
) -> Result<(Vector, PcgReport)> {
    let (x, rep) = pcg_solve(op, &*pc, rhs, &Vector::zeros(rhs.len()), tol, maxiter);
    if !(rep.breakdown() && matches!(pc, Preconditioner::Smw(_))) {
        rep.check()?;
        return Ok((x, rep));
    }
    log::debug!("PCG broke down under the low-rank preconditioner; retrying with the diagonal one");
    *pc = fallback()?;
    let (x, retry) = pcg_solve(op, &*pc, rhs, &Vector::zeros(rhs.len()), tol, maxiter);
    retry.check()?;
    Ok((x, PcgReport { iterations: rep.iterations + retry.iterations, ..retry }))
}

fn ip_iteration(
    prob: &SdpProblem,
    cfg: &IpConfig,
    point: &mut PrimalDualPoint,
    iter: usize,
    hybrid: &mut Hybrid,
    cg_tol: f64,
) -> Result<IterRecord> {
    let t0 = Instant::now();
    let state = IpState::new(prob, point.clone(), iter)?;
    let kind = match cfg.precond {
        PrecondKind::Hybrid if hybrid.switched => PrecondKind::Alpha,
        PrecondKind::Hybrid => PrecondKind::Beta,
        k => k,
    };
    let (mut pc, _) = build_precond(kind, prob, &state, cfg)?;
    let fallback = || build_precond(PrecondKind::Beta, prob, &state, cfg).map(|(p, _)| p);
    let diag = if cfg.diagnostics && prob.n() <= MAX_DIAG_N {
        Some(run_diagnostics(prob, &state, cfg)?)
    } else {
        None
    };
    let op = SchurOp { prob, state: &state };
    let res = residuals(prob, &state.point);

    let pred_target = ComplTarget::predictor(&state);
    let rhs = rhs_for_target(prob, &state, &res, &pred_target);
    let (dy_p, rep_p) = solve_system(&op, &mut pc, &fallback, &rhs, cg_tol, cfg.cg_maxiter)?;
    let (dx_p, ds_p) = recover_directions(prob, &state, &res, &pred_target, &dy_p);
    let (a_p, b_p) = step_lengths(&state, &dx_p, &ds_p, cfg.tau_frac)?;
    let x_trial = state.point.x.add_scaled(a_p, &dx_p);
    let s_trial = state.point.s.add_scaled(b_p, &ds_p);
    let xs = state.point.x.dot(&state.point.s);
    let sigma = (x_trial.dot(&s_trial) / xs).clamp(0.0, 1.0).powf(cfg.sigma_exponent);

    let corr_target = ComplTarget::corrector(&state, sigma * state.mu, &dx_p, &ds_p)?;
    let rhs = rhs_for_target(prob, &state, &res, &corr_target);
    let (dy, rep_c) = solve_system(&op, &mut pc, &fallback, &rhs, cg_tol, cfg.cg_maxiter)?;
    let (dx, ds) = recover_directions(prob, &state, &res, &corr_target, &dy);
    let (alpha, beta) = step_lengths(&state, &dx, &ds, cfg.tau_frac)?;

    let (x_new, alpha) = interior_update(&state.point.x, &dx, alpha)?;
    let (s_new, beta) = interior_update(&state.point.s, &ds, beta)?;
    point.x = x_new;
    point.s = s_new;
    point.y = &state.point.y + &dy * beta;

    if cfg.precond == PrecondKind::Hybrid
        && !hybrid.switched
        && hybrid_should_switch(prob.n(), prob.num_blocks(), cfg.rank_hints.hint(0), iter, rep_c.iterations)
    {
        log::debug!("iteration {iter}: switching to the low-rank preconditioner");
        hybrid.switched = true;
    }

    Ok(IterRecord {
        iter,
        dimacs_max: 0.0,
        objective: -prob.dual_objective(&point.y),
        cg: rep_p.iterations + rep_c.iterations,
        cg_tol,
        precond: kind.name().to_owned(),
        time_s: t0.elapsed().as_secs_f64(),
        mu: Some(state.mu),
        sigma: Some(sigma),
        alpha: Some(alpha),
        beta: Some(beta),
        cg_predictor: Some(rep_p.iterations),
        cg_corrector: Some(rep_c.iterations),
        diagnostics: diag,
        ..IterRecord::default()
    })
}

/// Runs the interior-point method from the default starting point.
///
/// Numerical failures during the iteration do not produce an `Err`; they end
/// the run with [`SolveStatus::Failed`] and the trace so far.
pub fn ip_solve(prob: &SdpProblem, cfg: &IpConfig) -> Result<Solution> {
    if !(cfg.tau_frac > 0.0 && cfg.tau_frac < 1.0) {
        return Err(Error::Config(format!("tau_frac {} outside (0, 1)", cfg.tau_frac)));
    }
    if matches!(cfg.precond, PrecondKind::Gamma | PrecondKind::Delta) {
        return Err(Error::Config(format!(
            "preconditioner {} targets the augmented Lagrangian Hessian; use alpha, beta, hybrid, tilde or none",
            cfg.precond
        )));
    }
    let start = Instant::now();
    let mut point = initial_point(prob);
    let mut tol = cfg.cg;
    let mut hybrid = Hybrid { switched: false };
    let mut trace: Vec<IterRecord> = Vec::new();
    let mut message = None;
    let mut last_mu = f64::INFINITY;

    let status = loop {
        let errs = dimacs(prob, &point);
        if let Some(last) = trace.last_mut() {
            last.dimacs_max = errs.max();
        }
        if errs.max() <= cfg.eps_dimacs {
            break SolveStatus::Converged;
        }
        if trace.len() >= cfg.max_iter {
            break SolveStatus::IterationLimit;
        }
        let iter = trace.len() + 1;
        match ip_iteration(prob, cfg, &mut point, iter, &mut hybrid, tol.current) {
            Ok(rec) => {
                let mu = rec.mu.unwrap_or(f64::NAN);
                if mu > 1.1 * last_mu {
                    log::debug!("iteration {iter}: mu increased from {last_mu:.3e} to {mu:.3e}");
                }
                last_mu = mu;
                trace.push(rec);
            }
            Err(e) => {
                log::warn!("interior-point iteration {iter} failed: {e}");
                message = Some(e.to_string());
                break SolveStatus::Failed;
            }
        }
        tol = tol.next_tolerance();
    };

    let errs = dimacs(prob, &point);
    let report = SolveReport {
        schema: REPORT_SCHEMA,
        solver: SolverKind::Ip,
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
