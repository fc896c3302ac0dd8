use std::path::{Path, PathBuf};
use std::process::ExitCode;

use lorank::ip::{ip_solve, IpConfig};
use lorank::model::{load_sdpa, write_sdpa, SdpProblem};
use lorank::pdal::{pdal_solve, PdalConfig};
use lorank::precond::{PrecondKind, RankHints};
use lorank::report::{SolveReport, SolveStatus, SolverKind};
use lorank::truss::{
    assemble, gen_ground, instance_name, verify_solution, volumes_from_y, TrussSdpSpec, TrussSidecar,
    TrussVerification, Variant,
};
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unreadable input, bad flags or an inconsistent solver configuration.
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Input(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Input(_) => ExitCode::from(EXIT_INPUT),
            CliError::Other(_) => ExitCode::from(EXIT_FAILURE),
        }
    }
}

pub const EXIT_NOT_CONVERGED: u8 = 1;
pub const EXIT_FAILURE: u8 = 3;
pub const EXIT_INPUT: u8 = 4;

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub solver: SolverKind,
    /// `None` picks the solver's default.
    pub precond: Option<PrecondKind>,
    pub rank: usize,
    pub tol: f64,
    pub cg_maxiter: usize,
    pub maxiter: Option<usize>,
    pub seed: u64,
    pub diagnostics: bool,
}

impl RunConfig {
    pub fn precond(&self) -> PrecondKind {
        self.precond.unwrap_or(match self.solver {
            SolverKind::Ip => PrecondKind::Hybrid,
            SolverKind::Pdal => PrecondKind::Gamma,
        })
    }

    /// CG floor: the standard `1e-6`, tightened to `tol/1000` for tolerances below `1e-5`
    /// so inexact Schur solves do not cap the attainable accuracy.
    fn cg_floor(&self) -> f64 {
        if self.tol < 1e-5 {
            (self.tol * 1e-3).min(1e-6)
        } else {
            1e-6
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.tol > 0.0) {
            return Err(CliError::Input(format!("--tol must be positive, got {}", self.tol)));
        }
        if self.rank == 0 {
            return Err(CliError::Input("--rank must be at least 1".into()));
        }
        Ok(())
    }

    pub fn ip_config(&self) -> IpConfig {
        let mut cfg = IpConfig {
            precond: self.precond(),
            eps_dimacs: self.tol,
            rank_hints: RankHints::uniform(self.rank),
            cg_maxiter: self.cg_maxiter,
            diagnostics: self.diagnostics,
            ..IpConfig::default()
        };
        cfg.cg.floor = self.cg_floor();
        if let Some(m) = self.maxiter {
            cfg.max_iter = m;
        }
        cfg
    }

    pub fn pdal_config(&self, variant: Option<Variant>) -> PdalConfig {
        let mut cfg = match variant {
            Some(Variant::Vib) => PdalConfig::vib(),
            _ => PdalConfig::tru(),
        };
        cfg.precond = self.precond();
        cfg.eps_dimacs = self.tol;
        cfg.eps = cfg.eps.min(self.tol);
        cfg.rank_hints = RankHints::uniform(self.rank);
        cfg.cg_maxiter = self.cg_maxiter;
        cfg.cg.floor = self.cg_floor();
        cfg.diagnostics = self.diagnostics;
        if let Some(m) = self.maxiter {
            cfg.max_newton = m;
        }
        cfg
    }
}

/// A problem together with the truss data it was generated from, when known.
pub struct Instance {
    pub name: String,
    pub problem: SdpProblem,
    pub truss: Option<TrussSidecar>,
}

/// Parses `tru3`, `vib5e` and the like into `(variant, g, e-variant)`.
pub fn parse_generator_name(s: &str) -> Option<(Variant, usize, bool)> {
    let variant = s.get(..3)?.parse().ok()?;
    let rest = &s[3..];
    let (digits, eps) = match rest.strip_suffix('e') {
        Some(d) => (d, true),
        None => (rest, false),
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((variant, digits.parse().ok()?, eps))
}

fn generated(variant: Variant, g: usize, t_lower: f64) -> Result<(String, TrussSidecar, SdpProblem), CliError> {
    if !(t_lower >= 0.0) {
        return Err(CliError::Input(format!("--eps must be nonnegative, got {t_lower}")));
    }
    let ground = gen_ground(g, variant).map_err(|e| CliError::Input(e.to_string()))?;
    let spec = TrussSdpSpec::for_variant(variant, t_lower);
    let problem = assemble(&ground, &spec).map_err(|e| CliError::Input(e.to_string()))?;
    Ok((instance_name(variant, g, t_lower > 0.0), TrussSidecar { ground, spec }, problem))
}

/// Resolves a file path, falling back to a generator name when no such file exists.
pub fn load_instance(input: &str) -> Result<Instance, CliError> {
    let path = Path::new(input);
    if path.exists() {
        let problem = load_sdpa(path).map_err(|e| CliError::Input(format!("{input}: {e}")))?;
        let sidecar = path.with_extension("json");
        let truss = if sidecar.exists() {
            Some(TrussSidecar::load(&sidecar).map_err(|e| CliError::Input(format!("{}: {e}", sidecar.display())))?)
        } else {
            None
        };
        let name = path.file_stem().map_or_else(|| input.to_owned(), |s| s.to_string_lossy().into_owned());
        return Ok(Instance { name, problem, truss });
    }
    let (variant, g, eps) = parse_generator_name(input)
        .ok_or_else(|| CliError::Input(format!("{input}: no such file and not a generator name like tru3 or vib5e")))?;
    let t_lower = if eps { TrussSdpSpec::EPS_LOWER } else { 0.0 };
    let (name, truss, problem) = generated(variant, g, t_lower)?;
    Ok(Instance { name, problem, truss: Some(truss) })
}

/// Writes `<name>.dat-s` and `<name>.json` into `dir`.
pub fn generate(variant: Variant, g: usize, t_lower: f64, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let (name, sidecar, problem) = generated(variant, g, t_lower)?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let dat = dir.join(format!("{name}.dat-s"));
    let json = dir.join(format!("{name}.json"));
    let comment = format!("{name}: {g}x{g} ground structure, {} bars, t in [{t_lower}, {}]", sidecar.ground.num_bars(), sidecar.spec.t_upper);
    write_sdpa(&problem, &dat, &comment).map_err(|e| CliError::Input(format!("{}: {e}", dat.display())))?;
    sidecar.save(&json).map_err(|e| CliError::Input(format!("{}: {e}", json.display())))?;
    Ok(vec![dat, json])
}

/// What `solve` prints: the solver report plus run metadata.
#[derive(Debug, Serialize)]
pub struct SolveOutput {
    pub instance: String,
    pub seed: u64,
    #[serde(flatten)]
    pub report: SolveReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<TrussVerification>,
}

pub struct Outcome {
    pub output: SolveOutput,
}

impl Outcome {
    pub fn exit_code(&self) -> ExitCode {
        match self.output.report.status {
            SolveStatus::Converged => ExitCode::SUCCESS,
            SolveStatus::IterationLimit => ExitCode::from(EXIT_NOT_CONVERGED),
            SolveStatus::Failed => ExitCode::from(EXIT_FAILURE),
        }
    }
}

pub fn solve_instance(inst: &Instance, cfg: &RunConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let solved = match cfg.solver {
        SolverKind::Ip => ip_solve(&inst.problem, &cfg.ip_config()),
        SolverKind::Pdal => {
            let variant = inst.truss.as_ref().map(|t| t.ground.variant);
            pdal_solve(&inst.problem, &cfg.pdal_config(variant))
        }
    };
    let sol = solved.map_err(|e| match e {
        lorank::Error::Config(msg) => CliError::Input(msg),
        other => CliError::Other(other.into()),
    })?;
    let verification = match &inst.truss {
        Some(t) if sol.report.status != SolveStatus::Failed => {
            let volumes = volumes_from_y(&sol.point.y);
            match verify_solution(&t.ground, &t.spec, &volumes, sol.point.x.blocks.first()) {
                Ok(v) => Some(v),
                Err(e) => {
                    log::warn!("verification of {} skipped: {e}", inst.name);
                    None
                }
            }
        }
        _ => None,
    };
    Ok(Outcome {
        output: SolveOutput { instance: inst.name.clone(), seed: cfg.seed, report: sol.report, verification },
    })
}

pub fn solve(input: &str, cfg: &RunConfig) -> Result<Outcome, CliError> {
    solve_instance(&load_instance(input)?, cfg)
}
