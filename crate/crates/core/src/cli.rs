//! Command-line front end.
//!
//! Data goes to standard output (or `--out`), diagnostics to standard
//! error. The exit code carries the outcome: 0 converged, 1 I/O or
//! validation failure, 2 infeasible, 3 iteration limit.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::models::{
    self, BitAllocation, EnergyReport, SlotSeries, COMPUTE_OFFSET, DOWNLINK_OFFSET, UPLINK_OFFSET,
};
use crate::scenario::{load_scenario, Scenario, ScenarioError};
use crate::solver::{
    optimize, DualState, EqualityMultipliers, KktSummary, Solution, SolverConfig, Status,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_ITER_LIMIT: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "uav-cloudlet",
    version,
    about = "Minimum-energy offloading to a UAV-mounted cloudlet"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one scenario and write the allocation.
    Solve(SolveArgs),
    /// Solve a family of scenarios obtained by varying one parameter.
    Sweep(SweepArgs),
    /// Print the optimum next to both baselines.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum SweepParam {
    DeadlineS,
    VelocityScale,
}

#[derive(Debug, clap::Args)]
pub struct SolverArgs {
    /// Relative duality gap accepted for convergence.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        let mut cfg = SolverConfig::default();
        if let Some(t) = self.tol {
            cfg.dual_tol = t;
        }
        if let Some(k) = self.max_iters {
            cfg.max_iters = k;
        }
        cfg
    }
}

#[derive(Debug, clap::Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, clap::Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// Comma-separated parameter values.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true, allow_negative_numbers = true)]
    pub values: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, clap::Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
}

pub fn exit_code(status: Status) -> i32 {
    match status {
        Status::Converged => EXIT_OK,
        Status::Infeasible => EXIT_INFEASIBLE,
        Status::IterLimit => EXIT_ITER_LIMIT,
    }
}

/// Full double precision with a '.' decimal point.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    run(&cli, &mut io::stdout().lock(), &mut io::stderr().lock())
}

pub fn run(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a, stdout),
        Command::Sweep(a) => cmd_sweep(a, stdout, stderr),
        Command::Compare(a) => cmd_compare(a, stdout),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = report_error(&e, stderr);
            EXIT_ERROR
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Solver(#[from] crate::solver::SolverError),
    #[error(transparent)]
    Model(#[from] models::ModelError),
    #[error("cannot write {}: {source}", path.display())]
    Output { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn report_error(e: &CliError, stderr: &mut dyn Write) -> io::Result<()> {
    match e {
        CliError::Scenario(ScenarioError::Invalid(violations)) => {
            writeln!(stderr, "invalid scenario:")?;
            for v in violations {
                writeln!(stderr, "  {v}")?;
            }
            Ok(())
        }
        other => writeln!(stderr, "error: {other}"),
    }
}

fn with_output<F>(out: Option<&Path>, stdout: &mut dyn Write, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
{
    match out {
        Some(path) => {
            let file = File::create(path).map_err(|source| CliError::Output {
                path: path.to_path_buf(),
                source,
            })?;
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush().map_err(|source| CliError::Output {
                path: path.to_path_buf(),
                source,
            })
        }
        None => {
            f(stdout)?;
            Ok(stdout.flush()?)
        }
    }
}

/// One row of the per-slot table. Slots run `1..=N`; a slot outside a
/// sequence's range carries zero bits and energy for it.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRow {
    pub slot: usize,
    pub distance_m: f64,
    pub uplink_bits: f64,
    pub compute_bits: f64,
    pub downlink_bits: f64,
    pub mobile_j: f64,
    pub cloudlet_j: f64,
}

pub const SLOT_COLUMNS: [&str; 7] = [
    "slot",
    "distance_m",
    "uplink_bits",
    "compute_bits",
    "downlink_bits",
    "mobile_j",
    "cloudlet_j",
];

pub fn slot_rows(s: &Scenario, a: &BitAllocation, r: &EnergyReport) -> Vec<SlotRow> {
    let at = |v: &[f64], slot: usize, offset: usize| {
        slot.checked_sub(offset)
            .and_then(|i| v.get(i))
            .copied()
            .unwrap_or(0.0)
    };
    s.positions()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let slot = i + 1;
            SlotRow {
                slot,
                distance_m: (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt(),
                uplink_bits: at(&a.uplink, slot, UPLINK_OFFSET),
                compute_bits: at(&a.compute, slot, COMPUTE_OFFSET),
                downlink_bits: at(&a.downlink, slot, DOWNLINK_OFFSET),
                mobile_j: at(&r.mobile_uplink_j.values, slot, UPLINK_OFFSET),
                cloudlet_j: at(&r.cloudlet_compute_j.values, slot, COMPUTE_OFFSET)
                    + at(&r.cloudlet_downlink_j.values, slot, DOWNLINK_OFFSET),
            }
        })
        .collect()
}

pub fn write_slot_csv(w: &mut dyn Write, rows: &[SlotRow]) -> Result<(), CliError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SLOT_COLUMNS)?;
    for r in rows {
        out.write_record([
            r.slot.to_string(),
            num(r.distance_m),
            num(r.uplink_bits),
            num(r.compute_bits),
            num(r.downlink_bits),
            num(r.mobile_j),
            num(r.cloudlet_j),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct AllocationOut {
    uplink: SlotSeries,
    compute: SlotSeries,
    downlink: SlotSeries,
}

#[derive(Debug, Serialize)]
struct SolutionOut<'a> {
    status: &'static str,
    iterations: usize,
    primal_value_j: f64,
    dual_value_j: f64,
    gap_j: f64,
    rel_gap: f64,
    allocation: AllocationOut,
    dual: &'a DualState,
    multipliers: &'a EqualityMultipliers,
    kkt: &'a KktSummary,
    report: &'a EnergyReport,
}

pub fn write_solution_json(w: &mut dyn Write, sol: &Solution) -> Result<(), CliError> {
    let a = &sol.allocation;
    let out = SolutionOut {
        status: sol.status.as_str(),
        iterations: sol.iterations,
        primal_value_j: sol.primal_value,
        dual_value_j: sol.dual_value,
        gap_j: sol.gap,
        rel_gap: sol.rel_gap,
        allocation: AllocationOut {
            uplink: SlotSeries::new(UPLINK_OFFSET, a.uplink.clone()),
            compute: SlotSeries::new(COMPUTE_OFFSET, a.compute.clone()),
            downlink: SlotSeries::new(DOWNLINK_OFFSET, a.downlink.clone()),
        },
        dual: &sol.dual,
        multipliers: &sol.multipliers,
        kkt: &sol.kkt,
        report: &sol.report,
    };
    serde_json::to_writer_pretty(&mut *w, &out)?;
    writeln!(w)?;
    Ok(())
}

fn cmd_solve(a: &SolveArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let s = load_scenario(&a.scenario)?;
    let sol = optimize(&s, &a.solver.config())?;
    with_output(a.out.as_deref(), stdout, |w| match a.format {
        Format::Csv => write_slot_csv(w, &slot_rows(&s, &sol.allocation, &sol.report)),
        Format::Json => write_solution_json(w, &sol),
    })?;
    Ok(exit_code(sol.status))
}

/// One line of a sweep. Numeric fields are `None` when they could not be
/// computed for that value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: f64,
    pub mobile_exec_j: Option<f64>,
    pub equal_alloc_j: Option<f64>,
    pub optimal_j: Option<f64>,
    /// Solver status, or `error` when the row could not be solved.
    pub status: String,
}

pub const SWEEP_COLUMNS: [&str; 5] = [
    "param",
    "mobile_exec_j",
    "equal_alloc_j",
    "optimal_j",
    "status",
];

fn sweep_row(
    base: &Scenario,
    param: SweepParam,
    value: f64,
    cfg: &SolverConfig,
) -> Result<SweepRow, CliError> {
    let s = match param {
        SweepParam::DeadlineS => base.with_deadline(value)?,
        SweepParam::VelocityScale => base.with_velocity_scale(value)?,
    };
    let equal = models::evaluate(&s, &models::equal_allocation(&s))?;
    let sol = optimize(&s, cfg)?;
    Ok(SweepRow {
        param: value,
        mobile_exec_j: Some(models::mobile_execution_energy(&s)),
        equal_alloc_j: Some(equal.mobile_uplink_j.total),
        optimal_j: (sol.status != Status::Infeasible).then_some(sol.primal_value),
        status: sol.status.as_str().to_string(),
    })
}

/// Solves every value in parallel; rows keep the input order.
pub fn sweep(
    base: &Scenario,
    param: SweepParam,
    values: &[f64],
    cfg: &SolverConfig,
) -> Vec<Result<SweepRow, CliError>> {
    values
        .par_iter()
        .map(|&v| sweep_row(base, param, v, cfg))
        .collect()
}

fn cmd_sweep(
    a: &SweepArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32, CliError> {
    let base = load_scenario(&a.scenario)?;
    let results = sweep(&base, a.param, &a.values, &a.solver.config());
    let mut rows = Vec::with_capacity(results.len());
    for (value, r) in a.values.iter().zip(results) {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                write!(stderr, "value {value}: ")?;
                report_error(&e, stderr)?;
                rows.push(SweepRow {
                    param: *value,
                    mobile_exec_j: None,
                    equal_alloc_j: None,
                    optimal_j: None,
                    status: "error".to_string(),
                });
            }
        }
    }
    with_output(a.out.as_deref(), stdout, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(SWEEP_COLUMNS)?;
        let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
        for r in &rows {
            out.write_record([
                num(r.param),
                opt(r.mobile_exec_j),
                opt(r.equal_alloc_j),
                opt(r.optimal_j),
                r.status.clone(),
            ])?;
        }
        out.flush()?;
        Ok(())
    })?;
    let all_failed = rows.iter().all(|r| r.optimal_j.is_none());
    Ok(if all_failed { EXIT_ERROR } else { EXIT_OK })
}

fn cmd_compare(a: &CompareArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let s = load_scenario(&a.scenario)?;
    let equal = models::evaluate(&s, &models::equal_allocation(&s))?;
    let sol = optimize(&s, &a.solver.config())?;
    let equal_feasible = equal.budget_residual_j <= 0.0 && !equal.overflow;
    writeln!(stdout, "frames                 {}", s.frames())?;
    writeln!(
        stdout,
        "mobile execution       {} J",
        num(models::mobile_execution_energy(&s))
    )?;
    writeln!(
        stdout,
        "equal allocation       {} J ({})",
        num(equal.mobile_uplink_j.total),
        if equal_feasible {
            "feasible"
        } else {
            "over cloudlet budget"
        }
    )?;
    writeln!(
        stdout,
        "optimal allocation     {} J ({})",
        num(sol.primal_value),
        sol.status.as_str()
    )?;
    writeln!(stdout, "dual bound             {} J", num(sol.dual_value))?;
    writeln!(
        stdout,
        "duality gap            {} J (relative {})",
        num(sol.gap),
        num(sol.rel_gap)
    )?;
    writeln!(
        stdout,
        "cloudlet energy        {} J of {} J",
        num(sol.report.cloudlet_total_j),
        num(s.devices.cloudlet_budget_j)
    )?;
    writeln!(stdout, "iterations             {}", sol.iterations)?;
    stdout.flush()?;
    Ok(exit_code(sol.status))
}
