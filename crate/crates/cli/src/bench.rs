use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::run::{load_instance, solve_instance, CliError, RunConfig, SolveOutput};

/// Column order: the per-instance table layout (iterations, CG iterations, CPU, CPU per
/// iteration) followed by objective, spectrum gap and status.
pub const HEADER: [&str; 12] = [
    "instance",
    "solver",
    "precond",
    "iter",
    "cg_iter",
    "cpu_s",
    "cpu_per_iter_s",
    "objective",
    "spectrum_gap",
    "dimacs_max",
    "status",
    "message",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub instance: String,
    pub solver: String,
    pub precond: String,
    pub iter: Option<usize>,
    pub cg_iter: Option<usize>,
    pub cpu_s: Option<f64>,
    pub cpu_per_iter_s: Option<f64>,
    pub objective: Option<f64>,
    pub spectrum_gap: Option<f64>,
    pub dimacs_max: Option<f64>,
    pub status: String,
    pub message: String,
}

impl BenchRow {
    pub fn from_output(out: &SolveOutput) -> Self {
        let r = &out.report;
        let status = serde_json::to_value(r.status).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        BenchRow {
            instance: out.instance.clone(),
            solver: r.solver.to_string(),
            precond: r.precond.to_string(),
            iter: Some(r.iterations),
            cg_iter: Some(r.cg_total),
            cpu_s: Some(r.wall_time_s),
            cpu_per_iter_s: Some(r.wall_time_s / r.iterations.max(1) as f64),
            objective: Some(r.objective),
            spectrum_gap: r.spectrum_gap(),
            dimacs_max: Some(r.dimacs.max()),
            status,
            message: r.message.clone().unwrap_or_default(),
        }
    }

    fn failed(instance: &str, cfg: &RunConfig, status: &str, err: &CliError) -> Self {
        BenchRow {
            instance: instance.to_owned(),
            solver: cfg.solver.to_string(),
            precond: cfg.precond().to_string(),
            iter: None,
            cg_iter: None,
            cpu_s: None,
            cpu_per_iter_s: None,
            objective: None,
            spectrum_gap: None,
            dimacs_max: None,
            status: status.to_owned(),
            message: err.to_string(),
        }
    }
}

/// Runs every instance under every configuration, one after another; a failing run
/// becomes a row with an error status.
pub fn run(instances: &[String], configs: &[RunConfig]) -> Vec<BenchRow> {
    let mut rows = Vec::with_capacity(instances.len() * configs.len());
    for input in instances {
        let inst = match load_instance(input) {
            Ok(inst) => inst,
            Err(e) => {
                log::warn!("{e}");
                rows.extend(configs.iter().map(|cfg| BenchRow::failed(input, cfg, "input_error", &e)));
                continue;
            }
        };
        for cfg in configs {
            let row = match solve_instance(&inst, cfg) {
                Ok(out) => BenchRow::from_output(&out.output),
                Err(e @ CliError::Input(_)) => BenchRow::failed(&inst.name, cfg, "input_error", &e),
                Err(e) => BenchRow::failed(&inst.name, cfg, "failed", &e),
            };
            log::info!("{} {} {}: {}", row.instance, row.solver, row.precond, row.status);
            rows.push(row);
        }
    }
    rows
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Other(e.into())
}

/// Header plus rows; an empty slice still yields the header line.
pub fn write_rows<W: Write>(out: W, rows: &[BenchRow]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(HEADER).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Other(e.into()))
}

/// Appends one row, writing the header first if the file is new or empty.
pub fn append_row(path: &Path, row: &BenchRow) -> Result<(), CliError> {
    let fresh = std::fs::metadata(path).map_or(true, |m| m.len() == 0);
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(HEADER).map_err(csv_err)?;
    }
    w.serialize(row).map_err(csv_err)?;
    w.flush().map_err(|e| CliError::Other(e.into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_is_header_only() {
        let mut buf = Vec::new();
        write_rows(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), HEADER.join(",") + "\n");
    }
}
