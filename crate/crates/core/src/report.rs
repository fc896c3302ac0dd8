//! Solver reports: per-iteration traces and the summary written by the CLI.

use serde::{Deserialize, Serialize};

use crate::linalg::{sym_eigvals, DenseSym};
use crate::model::{DimacsErrors, PrimalDualPoint, ProblemDims};
use crate::precond::PrecondKind;

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Ip,
    Pdal,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Ip => "ip",
            SolverKind::Pdal => "pdal",
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SolverKind {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "ip" => Ok(SolverKind::Ip),
            "pdal" => Ok(SolverKind::Pdal),
            _ => Err(crate::Error::Config(format!("unknown solver {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    IterationLimit,
    Failed,
}

/// Dense diagnostics recorded when enabled and `n` is small.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterDiagnostics {
    /// `κ(P^{-1/2} H P^{-1/2})` for the split preconditioner.
    pub kappa: Option<f64>,
    /// Its a-priori bound.
    pub kappa_bound: Option<f64>,
    /// `κ(H)` without preconditioning.
    pub kappa_unpreconditioned: Option<f64>,
    /// Relative difference between the matrix-free and the dense operator.
    pub operator_mismatch: Option<f64>,
    /// Smallest eigenvalue of the dense system matrix.
    pub min_eig: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub dimacs_max: f64,
    pub objective: f64,
    /// CG iterations spent in this major iteration (all linear solves).
    pub cg: usize,
    pub cg_tol: f64,
    pub precond: String,
    pub time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cg_predictor: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cg_corrector: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi_lmi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi_lin: Option<f64>,
    /// Outer iteration a Newton step belongs to.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outer: Option<usize>,
    /// Newton step index within its outer iteration.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub early_stop: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<IterDiagnostics>,
}

/// Leading eigenvalues of one dual block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    /// Up to three largest eigenvalues, descending.
    pub top: Vec<f64>,
    pub median: f64,
    /// `λ_1 / λ_2`; absent for 1×1 blocks or a nonpositive second eigenvalue.
    pub gap_ratio: Option<f64>,
}

impl SpectrumSummary {
    pub fn of(m: &DenseSym) -> Option<Self> {
        let mut v: Vec<f64> = sym_eigvals(m).ok()?.iter().copied().collect();
        v.reverse();
        let top = v.iter().take(3).copied().collect();
        let median = v[v.len() / 2];
        let gap_ratio = (v.len() > 1 && v[1] > 0.0).then(|| v[0] / v[1]);
        Some(SpectrumSummary { top, median, gap_ratio })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub schema: u32,
    pub solver: SolverKind,
    pub precond: PrecondKind,
    pub problem: ProblemDims,
    pub status: SolveStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub iterations: usize,
    pub cg_total: usize,
    pub cg_per_iteration: Vec<usize>,
    pub wall_time_s: f64,
    pub dimacs: DimacsErrors,
    /// `C • X + dᵀx_lin`.
    pub primal_objective: f64,
    /// `bᵀy`.
    pub dual_objective: f64,
    /// `−bᵀy`: the optimal value of the minimization stored in the input
    /// file (for truss instances, the total bar volume).
    pub objective: f64,
    /// Spectra of the matrix multiplier blocks `X_i`.
    pub spectra: Vec<SpectrumSummary>,
    pub trace: Vec<IterRecord>,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    /// Smallest `λ_1/λ_2` over the dual blocks.
    pub fn spectrum_gap(&self) -> Option<f64> {
        self.spectra.iter().filter_map(|s| s.gap_ratio).reduce(f64::min)
    }
}

/// Result of a solve: the final iterate and its report.
#[derive(Clone, Debug)]
pub struct Solution {
    pub point: PrimalDualPoint,
    pub report: SolveReport,
}

pub(crate) fn spectra_of(point: &PrimalDualPoint) -> Vec<SpectrumSummary> {
    point.x.blocks.iter().filter_map(SpectrumSummary::of).collect()
}
