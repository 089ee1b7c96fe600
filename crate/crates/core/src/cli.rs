//! Command-line front end: `structure | solve | verify | report`.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::jordan::{
    build_jordan_chains, build_projectors, commutability_data, structure_report, CommutabilityData,
    JordanStructure, ProjectorSet, COMPLETENESS_TOL, SCHMIDT_MAX_CONDITION,
};
use crate::probspec::{
    instantiate_with, load_problem, oracle_deviation, Instance, Oracle, Overrides,
};
use crate::reduction::{residual_check, ResidualReport};
use crate::solvers::{self, Solution};

pub const LINK_TOL: f64 = 1e-8;
pub const IDEMPOTENCE_TOL: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(
    name = "jordan-reduce",
    version,
    about = "Reduce and solve singular operator-differential systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Jordan chains, projectors and certificates.
    Structure(CommonArgs),
    /// Solve and write the solution as CSV.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        /// CSV destination; standard output when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Solve and check against the bundled oracle.
    Verify(CommonArgs),
    /// Full run report without CSV output.
    Report(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Problem file (JSON).
    pub problem: PathBuf,
    /// Multiply the interval count of spatial grids.
    #[arg(long)]
    pub grid_scale: Option<f64>,
    /// Time step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Modes per direction of sine spaces.
    #[arg(long)]
    pub modes: Option<usize>,
    /// Verification tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
}

impl CommonArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            grid_scale: self.grid_scale,
            dt: self.dt,
            modes: self.modes,
            tol: self.tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub kind: String,
    pub deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub problem: String,
    pub regular: bool,
    pub structure: String,
    pub certificates: Vec<Certificate>,
    pub reduction: Option<String>,
    pub diagnostics: Option<String>,
    pub residual: Option<ResidualReport>,
    pub oracle: Option<OracleCheck>,
    pub wall_time: Duration,
}

impl RunReport {
    pub fn certified(&self) -> bool {
        self.certificates.iter().all(|c| c.passed)
    }

    /// Stable text; only the final `wall_time_ms` line varies between runs.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "problem={}", self.problem);
        if self.regular {
            let _ = writeln!(
                s,
                "regular equation: B has a bounded inverse, no reduction needed"
            );
        }
        let _ = writeln!(s, "[structure]");
        s.push_str(&self.structure);
        let _ = writeln!(s, "[certificates]");
        for c in &self.certificates {
            let _ = writeln!(
                s,
                "{} {} measured={:.3e} tolerance={:.3e}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.tolerance
            );
        }
        if let Some(r) = &self.reduction {
            let _ = writeln!(s, "[reduction]");
            s.push_str(r);
        }
        if let Some(d) = &self.diagnostics {
            let _ = writeln!(s, "[solver]");
            s.push_str(d);
        }
        if let Some(r) = &self.residual {
            let _ = writeln!(s, "[residual]");
            s.push_str(&r.to_text());
        }
        if let Some(o) = &self.oracle {
            let _ = writeln!(s, "[verify]");
            let _ = writeln!(
                s,
                "{} oracle={} deviation={:.3e} tolerance={:.3e}",
                if o.passed { "PASS" } else { "FAIL" },
                o.kind,
                o.deviation,
                o.tolerance
            );
        }
        let _ = writeln!(s, "wall_time_ms={}", self.wall_time.as_millis());
        s
    }
}

fn load(path: &Path, ov: &Overrides) -> Result<Instance> {
    instantiate_with(&load_problem(path)?, ov)
}

fn cert(name: impl Into<String>, measured: f64, tolerance: f64, passed: bool) -> Certificate {
    Certificate {
        name: name.into(),
        passed,
        measured,
        tolerance,
    }
}

fn certificates(
    js: &JordanStructure,
    ps: &ProjectorSet,
    comm: &CommutabilityData,
    commute_tol: f64,
) -> Vec<Certificate> {
    let mut out = vec![
        cert(
            "completeness",
            js.completeness_sigma(),
            COMPLETENESS_TOL,
            js.l() == 0 || js.completeness_sigma() >= COMPLETENESS_TOL,
        ),
        cert(
            "chain_links",
            js.link_residual(),
            LINK_TOL,
            js.link_residual() <= LINK_TOL,
        ),
        cert(
            "biorthogonality",
            js.biorthogonality_defect(),
            LINK_TOL,
            js.biorthogonality_defect() <= LINK_TOL,
        ),
        cert(
            "projector_idempotence",
            ps.idempotence_defect(),
            IDEMPOTENCE_TOL,
            ps.idempotence_defect() <= IDEMPOTENCE_TOL,
        ),
        cert(
            "schmidt_condition",
            ps.schmidt_condition,
            SCHMIDT_MAX_CONDITION,
            ps.schmidt_condition <= SCHMIDT_MAX_CONDITION,
        ),
        cert(
            "commute_B",
            comm.mat_b.residual,
            commute_tol,
            comm.mat_b.certified,
        ),
    ];
    for (i, a) in comm.mat_a.iter().enumerate() {
        out.push(cert(
            format!("commute_A{}", i + 1),
            a.residual,
            commute_tol,
            a.certified,
        ));
        out.push(cert(
            format!("quasitriangular_A{}", i + 1),
            0.0,
            commute_tol,
            a.quasitriangular,
        ));
    }
    out
}

fn structure_part(
    path: &Path,
    js: &JordanStructure,
    ps: &ProjectorSet,
    comm: &CommutabilityData,
    tol: f64,
) -> RunReport {
    RunReport {
        problem: path.display().to_string(),
        regular: js.is_regular(),
        structure: structure_report(js, ps, Some(comm)),
        certificates: certificates(js, ps, comm, tol),
        ..Default::default()
    }
}

/// Builds chains, projectors and commutability data and lists every certificate.
pub fn cmd_structure(path: &Path, ov: &Overrides) -> Result<RunReport> {
    let start = Instant::now();
    let inst = load(path, ov)?;
    let spec = &inst.spec;
    let js = build_jordan_chains(&spec.b, &spec.a[0], spec.settings.rank_tol)?;
    let ps = build_projectors(&js)?;
    let comm = commutability_data(&spec.b, &spec.a, &js, &ps, spec.settings.commute_tol)?;
    let mut report = structure_part(path, &js, &ps, &comm, spec.settings.commute_tol);
    report.wall_time = start.elapsed();
    Ok(report)
}

fn run_solver(path: &Path, ov: &Overrides) -> Result<(RunReport, Instance, Solution)> {
    let start = Instant::now();
    let inst = load(path, ov)?;
    let sol = solvers::solve(&inst.spec)?;
    let rp = &sol.reduced;
    let mut report = structure_part(
        path,
        &rp.js,
        &rp.ps,
        &rp.comm,
        inst.spec.settings.commute_tol,
    );
    report.reduction = Some(sol.reduced.report());
    report.diagnostics = Some(sol.diagnostics.to_text());
    report.residual = Some(residual_check(&inst.spec, &sol.u, &sol.reduced.bc_plan)?);
    report.wall_time = start.elapsed();
    Ok((report, inst, sol))
}

/// Solves and returns the report with the CSV text.
pub fn cmd_solve(path: &Path, ov: &Overrides) -> Result<(RunReport, String)> {
    let (report, _, sol) = run_solver(path, ov)?;
    Ok((report, sol.field.to_csv()))
}

/// Compares a solution with the instance's oracle, or with the residual
/// check when the oracle is `"residual"` or absent.
pub fn check_oracle(
    inst: &Instance,
    sol: &Solution,
    residual: &ResidualReport,
) -> Result<OracleCheck> {
    let tol = inst.verify_tol;
    let (kind, deviation) = match &inst.oracle {
        Some(Oracle::Exprs(exprs)) => (
            "closed_form",
            oracle_deviation(exprs, &inst.env, &sol.field)?,
        ),
        Some(Oracle::Residual) | None => (
            "residual",
            residual.equation.max(residual.worst_condition()),
        ),
    };
    Ok(OracleCheck {
        kind: kind.into(),
        deviation,
        tolerance: tol,
        passed: deviation <= tol,
    })
}

/// Solves and checks the oracle; `report.oracle` carries the verdict.
pub fn cmd_verify(path: &Path, ov: &Overrides) -> Result<RunReport> {
    let (mut report, inst, sol) = run_solver(path, ov)?;
    let residual = report.residual.as_ref().expect("residual computed");
    report.oracle = Some(check_oracle(&inst, &sol, residual)?);
    Ok(report)
}

pub fn cmd_report(path: &Path, ov: &Overrides) -> Result<RunReport> {
    Ok(run_solver(path, ov)?.0)
}

fn exit_code(e: &Error) -> i32 {
    if e.is_input_error() {
        2
    } else {
        1
    }
}

/// Runs a parsed command line; returns the process exit code.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result: Result<i32> = (|| match &cli.command {
        Command::Structure(a) => {
            let r = cmd_structure(&a.problem, &a.overrides())?;
            write!(out, "{}", r.to_text())?;
            Ok(if r.certified() { 0 } else { 1 })
        }
        Command::Solve { common, output } => {
            let (r, csv) = cmd_solve(&common.problem, &common.overrides())?;
            match output {
                Some(p) => {
                    std::fs::write(p, csv)
                        .map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
                    write!(out, "{}", r.to_text())?;
                }
                None => {
                    out.write_all(csv.as_bytes())?;
                    write!(err, "{}", r.to_text())?;
                }
            }
            Ok(if r.certified() { 0 } else { 1 })
        }
        Command::Verify(a) => {
            let r = cmd_verify(&a.problem, &a.overrides())?;
            write!(out, "{}", r.to_text())?;
            let ok = r.certified() && r.oracle.as_ref().is_some_and(|o| o.passed);
            Ok(if ok { 0 } else { 1 })
        }
        Command::Report(a) => {
            let r = cmd_report(&a.problem, &a.overrides())?;
            write!(out, "{}", r.to_text())?;
            Ok(if r.certified() { 0 } else { 1 })
        }
    })();
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
