//! `lorank`: generate truss instances, solve SDPs and tabulate benchmark runs.

mod bench;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lorank::precond::PrecondKind;
use lorank::report::SolverKind;
use lorank::truss::Variant;

use crate::run::{CliError, RunConfig};

#[derive(Parser)]
#[command(name = "lorank", version, about = "Low-rank preconditioned SDP solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a truss instance as `<name>.dat-s` plus a `<name>.json` geometry sidecar.
    Gen {
        /// `tru` (compliance) or `vib` (compliance and vibration).
        variant: Variant,
        /// Grid size: the ground structure has `g × g` nodes.
        size: usize,
        /// Lower bound on bar volumes; a positive value gives the `e` variant.
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Solve one instance and print its JSON report.
    Solve {
        /// SDPA sparse file, or a generator name such as `tru3` or `vib5e`.
        input: String,
        #[command(flatten)]
        opts: SolveOpts,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Append a CSV row to this file (the header is written once).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Solve a list of instances sequentially and write one CSV row per run.
    Bench {
        /// SDPA files or generator names.
        instances: Vec<String>,
        /// Solvers to run; repeat the flag for several.
        #[arg(long = "solver", value_name = "SOLVER", default_values_t = [SolverKind::Ip])]
        solvers: Vec<SolverKind>,
        /// Preconditioners to run; repeat the flag for several. Defaults per solver.
        #[arg(long = "precond", value_name = "PRECOND")]
        preconds: Vec<PrecondKind>,
        #[command(flatten)]
        opts: CommonOpts,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SolveOpts {
    #[arg(long, default_value_t = SolverKind::Ip)]
    solver: SolverKind,
    /// Defaults to `hybrid` for `ip` and `gamma` for `pdal`.
    #[arg(long)]
    precond: Option<PrecondKind>,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Expected rank of each dual block.
    #[arg(long, default_value_t = 1)]
    rank: usize,
    /// DIMACS stopping tolerance.
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    /// CG iteration cap per linear system.
    #[arg(long, default_value_t = lorank::pcg::DEFAULT_MAXITER)]
    cg_maxiter: usize,
    /// Cap on IP iterations or on PDAL Newton steps.
    #[arg(long)]
    maxiter: Option<usize>,
    /// Recorded in the report; the solvers themselves are deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dense per-iteration diagnostics (only for n ≤ 400).
    #[arg(long)]
    diag: bool,
}

impl CommonOpts {
    fn run_config(&self, solver: SolverKind, precond: Option<PrecondKind>) -> RunConfig {
        RunConfig {
            solver,
            precond,
            rank: self.rank,
            tol: self.tol,
            cg_maxiter: self.cg_maxiter,
            maxiter: self.maxiter,
            seed: self.seed,
            diagnostics: self.diag,
        }
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("LORANK_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Input(format!("LORANK_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Input(format!("cannot size the thread pool: {e}")))
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    init_threads()?;
    match cli.command {
        Command::Gen { variant, size, eps, out } => {
            for path in run::generate(variant, size, eps, &out)? {
                println!("{}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Solve { input, opts, out, csv } => {
            let cfg = opts.common.run_config(opts.solver, opts.precond);
            let outcome = run::solve(&input, &cfg)?;
            let json = serde_json::to_string_pretty(&outcome.output).map_err(anyhow::Error::from)?;
            match out {
                Some(path) => std::fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))?,
                None => println!("{json}"),
            }
            if let Some(path) = csv {
                bench::append_row(&path, &bench::BenchRow::from_output(&outcome.output))?;
            }
            Ok(outcome.exit_code())
        }
        Command::Bench { instances, solvers, preconds, opts, out } => {
            let mut configs = Vec::new();
            for &solver in &solvers {
                if preconds.is_empty() {
                    configs.push(opts.run_config(solver, None));
                }
                for &p in &preconds {
                    configs.push(opts.run_config(solver, Some(p)));
                }
            }
            let rows = bench::run(&instances, &configs);
            match out {
                Some(path) => {
                    let file = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
                    bench::write_rows(file, &rows)?;
                }
                None => bench::write_rows(std::io::stdout().lock(), &rows)?,
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("lorank: {e}");
            e.exit_code()
        }
    }
}
