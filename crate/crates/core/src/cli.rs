//! Command-line front end: config in, CSV/JSON artifacts out.

use crate::airy;
use crate::config::{FieldSpec, RunConfig};
use crate::error::{invalid, Error, Result};
use crate::experiments::{discrete_cost_scan, scaling_family_check};
use crate::hum::{estimate_observability_with, solve_control_with};
use crate::io::{field_table, trajectory_table, ArtifactSet, Cell, Table};
use crate::nonlinear::fixed_point_solve;
use crate::propagate::{evolve, PropagatorSpec};
use crate::spectral::metric_basis;
use crate::stats::loglog_slope;
use crate::verify;
use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

#[derive(Debug, Parser)]
#[command(name = "hartree-control", version, about = "Control synthesis and verification runs")]
pub struct Cli {
    /// TOML run configuration; defaults apply when absent
    #[arg(long, global = true, env = "HARTREE_CONTROL_CONFIG")]
    pub config: Option<PathBuf>,
    /// output directory
    #[arg(long, global = true, env = "HARTREE_CONTROL_OUT", default_value = "out")]
    pub out: PathBuf,
    /// seed for randomized suites (overrides the config)
    #[arg(long, global = true, env = "HARTREE_CONTROL_SEED")]
    pub seed: Option<u64>,
    /// worker threads for scans and assembly
    #[arg(long, global = true, env = "HARTREE_CONTROL_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Eigenpairs of the metric operator, with the Airy reference for `-∂²+|x|`
    Basis {
        #[arg(long)]
        n: Option<usize>,
    },
    /// Homogeneous evolution of the initial data
    Evolve,
    /// Linear HUM control from the initial data to the target
    Control,
    /// Fixed-point control of the Hartree equation
    ControlNonlinear,
    /// Cost of eigenmode targets with interior and exterior cutoffs
    NoncontrolScan,
    /// Norm scaling of the concentrating family and its scaled energy
    ScalingScan,
    /// Run the invariant suites
    Verify {
        /// restrict to these suites
        #[arg(long = "suite")]
        suites: Vec<String>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Basis { .. } => "basis",
            Command::Evolve => "evolve",
            Command::Control => "control",
            Command::ControlNonlinear => "control-nonlinear",
            Command::NoncontrolScan => "noncontrol-scan",
            Command::ScalingScan => "scaling-scan",
            Command::Verify { .. } => "verify",
        }
    }
}

/// How a completed run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    /// numbers were produced but a solver or check failed
    NumericalFailure,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Ok => 0,
            RunStatus::NumericalFailure => 2,
        }
    }
}

pub struct Outcome {
    pub status: RunStatus,
    pub summary: Value,
}

/// Parse arguments, run, write the manifest; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Command::Basis { n: Some(n) } = cli.command {
        cfg.basis.n = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Run one command end to end. Artifacts are removed again when the run
/// errors out; numerical failures keep their data.
pub fn execute(cli: &Cli) -> Result<i32> {
    let cfg = load_config(cli)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return invalid("--threads must be positive");
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let clock = Instant::now();
    let mut artifacts = ArtifactSet::create(&cli.out)?;
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        run_command(&cli.command, &cfg, &mut artifacts)
    }));
    let outcome = match result {
        Ok(Ok(o)) => o,
        Ok(Err(e)) => {
            artifacts.discard();
            return Err(e);
        }
        Err(_) => {
            artifacts.discard();
            return Err(Error::InvalidInput("run panicked; outputs removed".into()));
        }
    };
    let manifest = json!({
        "tool": "hartree-control",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cli.command.name(),
        "seed": cfg.seed,
        "threads": rayon::current_num_threads(),
        "config": serde_json::to_value(&cfg)?,
        "started_unix_s": started,
        "wall_time_s": clock.elapsed().as_secs_f64(),
        "status": outcome.status,
        "exit_code": outcome.status.exit_code(),
        "summary": outcome.summary,
        "artifacts": artifacts.names(),
    });
    artifacts.write_json("manifest.json", &manifest)?;
    Ok(outcome.status.exit_code())
}

/// Dispatch without manifest handling.
pub fn run_command(cmd: &Command, cfg: &RunConfig, out: &mut ArtifactSet) -> Result<Outcome> {
    match cmd {
        Command::Basis { .. } => run_basis(cfg, out),
        Command::Evolve => run_evolve(cfg, out),
        Command::Control => run_control(cfg, out),
        Command::ControlNonlinear => run_nonlinear(cfg, out),
        Command::NoncontrolScan => run_noncontrol(cfg, out),
        Command::ScalingScan => run_scaling(cfg, out),
        Command::Verify { suites } => run_verify(cfg, suites, out),
    }
}

fn ok(summary: Value) -> Outcome {
    Outcome {
        status: RunStatus::Ok,
        summary,
    }
}

fn run_basis(cfg: &RunConfig, out: &mut ArtifactSet) -> Result<Outcome> {
    let grid = cfg.grid_spec()?;
    let (op, basis) = metric_basis(&grid, cfg.basis.operator, cfg.basis.n)?;
    let reference = match cfg.basis.operator {
        crate::spectral::MetricOperator::AbsValue => Some(airy::eigenvalues(cfg.basis.n)?),
        crate::spectral::MetricOperator::Weight => None,
    };
    let mut t = Table::new(&["index", "eigenvalue", "parity", "airy_eigenvalue", "abs_error"]);
    let mut max_err = 0.0_f64;
    for (k, lam) in basis.eigenvalues.iter().enumerate() {
        let parity = if k % 2 == 0 { "even" } else { "odd" };
        let (r, e) = match &reference {
            Some(v) => {
                let e = (lam - v[k]).abs();
                max_err = max_err.max(e);
                (Cell::Float(v[k]), Cell::Float(e))
            }
            None => (Cell::Text(String::new()), Cell::Text(String::new())),
        };
        t.push(vec![k.into(), (*lam).into(), parity.into(), r, e])?;
    }
    out.write_table("basis.csv", &t)?;
    let (residual, defect) = basis.quality(&op);
    Ok(ok(json!({
        "modes": basis.n_modes(),
        "lambda0": basis.eigenvalues[0],
        "max_abs_error_vs_airy": reference.map(|_| max_err),
        "eigen_residual": residual,
        "orthogonality_defect": defect,
    })))
}

fn needs_basis(spec: &FieldSpec) -> bool {
    matches!(spec, FieldSpec::Mode { .. })
}

fn run_evolve(cfg: &RunConfig, out: &mut ArtifactSet) -> Result<Outcome> {
    let grid = cfg.grid_spec()?;
    let basis = if needs_basis(&cfg.data.initial) {
        Some(metric_basis(&grid, cfg.solver.metric, cfg.solver.n_modes)?.1)
    } else {
        None
    };
    let u0 = cfg.data.initial.build(&grid, basis.as_ref())?;
    let spec = PropagatorSpec::new(cfg.evolve.scheme, cfg.time.dt, cfg.potential_field()?)?;
    let traj = evolve(&u0, cfg.time.horizon, &spec)?;
    let mu: Vec<f64> = grid.points().into_iter().map(crate::domain::weight_mu).collect();
    let pts = grid.points();
    let mut diag = Table::new(&["t", "mass", "h_norm", "center"]);
    let m0 = u0.norm_l2().powi(2);
    let mut drift = 0.0_f64;
    for (n, f) in traj.fields.iter().enumerate() {
        let mass = f.norm_l2().powi(2);
        drift = drift.max((mass - m0).abs());
        let center = if mass > 0.0 {
            f.dx() * f.values.iter().zip(&pts).map(|(z, x)| x * z.norm_sqr()).sum::<f64>() / mass
        } else {
            0.0
        };
        if n % cfg.evolve.stride == 0 || n == traj.steps() {
            diag.push(vec![traj.time(n).into(), mass.into(), f.norm_h(&mu).into(), center.into()])?;
        }
    }
    out.write_table("evolve_diagnostics.csv", &diag)?;
    out.write_table("evolve_trajectory.csv", &trajectory_table(&traj, cfg.evolve.stride))?;
    Ok(ok(json!({
        "steps": traj.steps(),
        "initial_mass": m0,
        "max_mass_drift": drift,
        "final_mass": traj.last().norm_l2().powi(2),
    })))
}

fn run_control(cfg: &RunConfig, out: &mut ArtifactSet) -> Result<Outcome> {
    let problem = cfg.linear_problem(cfg.metric_basis()?)?;
    let op = cfg.s_operator(&problem)?;
    let (sol, status) = match solve_control_with(&op) {
        Ok(s) => (s, RunStatus::Ok),
        Err(Error::ControlNotConverged(best)) => (*best, RunStatus::NumericalFailure),
        Err(e) => return Err(e),
    };
    let obs = estimate_observability_with(&op, cfg.solver.n_probe)?;
    let stride = cfg.output.stride;
    out.write_table("state.csv", &trajectory_table(&sol.u, stride))?;
    out.write_table("control.csv", &trajectory_table(&sol.h, stride))?;
    out.write_table("target.csv", &field_table(&problem.target))?;
    let summary = json!({
        "converged": sol.converged,
        "cost": sol.cost,
        "cg_iterations": sol.cg_iterations,
        "residual": sol.residual,
        "target_error": sol.target_error,
        "relative_target_error": sol.relative_target_error,
        "unresolved_tail": sol.unresolved_tail,
        "path": sol.path,
        "observability": obs.constant,
        "observability_largest": obs.largest,
        "lanczos_steps": obs.lanczos_steps,
    });
    out.write_json("control_summary.json", &summary)?;
    Ok(Outcome { status, summary })
}

fn run_nonlinear(cfg: &RunConfig, out: &mut ArtifactSet) -> Result<Outcome> {
    let basis = cfg.metric_basis()?;
    let setup = cfg.nonlinear_setup(basis.clone(), 1.0)?;
    let mut sweep = Table::new(&["factor", "converged", "iterations", "contraction_factor"]);
    let mut pairs = Vec::new();
    for &f in &cfg.nonlinear.sweep {
        let s = cfg.nonlinear_setup(basis.clone(), f)?;
        match fixed_point_solve(&s) {
            Ok(run) => {
                let r = run.contraction_factor();
                if let Some(r) = r {
                    pairs.push((f, r));
                }
                sweep.push(vec![f.into(), run.converged.into(), run.iterations.into(), r.into()])?;
            }
            Err(Error::NotContracting { ratios }) => {
                sweep.push(vec![f.into(), false.into(), ratios.len().into(), ratios.last().copied().into()])?;
            }
            Err(e) => return Err(e),
        }
    }
    if !cfg.nonlinear.sweep.is_empty() {
        out.write_table("sweep.csv", &sweep)?;
    }
    let sweep_exponent = if pairs.len() > 1 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        Some(loglog_slope(&xs, &ys))
    } else {
        None
    };
    let run = match fixed_point_solve(&setup) {
        Ok(r) => r,
        Err(Error::NotContracting { ratios }) => {
            let mut t = Table::new(&["k", "ratio"]);
            for (k, r) in ratios.iter().enumerate() {
                t.push(vec![(k + 1).into(), (*r).into()])?;
            }
            out.write_table("iterations.csv", &t)?;
            let summary = json!({ "converged": false, "ratios": ratios, "sweep_exponent": sweep_exponent });
            out.write_json("nonlinear_summary.json", &summary)?;
            return Ok(Outcome {
                status: RunStatus::NumericalFailure,
                summary,
            });
        }
        Err(e) => return Err(e),
    };
    let mut hist = Table::new(&["k", "distance", "ratio"]);
    for row in &run.history {
        hist.push(vec![row.k.into(), row.distance.into(), row.ratio.into()])?;
    }
    out.write_table("iterations.csv", &hist)?;
    out.write_table("state.csv", &trajectory_table(&run.state, cfg.output.stride))?;
    out.write_table("control.csv", &trajectory_table(&run.control.h, cfg.output.stride))?;
    let summary = json!({
        "converged": run.converged,
        "iterations": run.iterations,
        "contraction_factor": run.contraction_factor(),
        "target_error": run.target_error,
        "forward_mismatch": run.forward_mismatch,
        "cubic_constant": run.cubic_constant,
        "cost": run.control.cost,
        "sweep_exponent": sweep_exponent,
    });
    out.write_json("nonlinear_summary.json", &summary)?;
    let status = if run.converged {
        RunStatus::Ok
    } else {
        RunStatus::NumericalFailure
    };
    Ok(Outcome { status, summary })
}

fn run_noncontrol(cfg: &RunConfig, out: &mut ArtifactSet) -> Result<Outcome> {
    let scan = discrete_cost_scan(&cfg.noncontrol)?;
    let mut t = Table::new(&[
        "n",
        "lambda",
        "cost",
        "cg_iterations",
        "residual",
        "converged",
        "observability",
        "bound_quantity",
        "exterior_cost",
        "exterior_converged",
    ]);
    for r in &scan.rows {
        t.push(vec![
            r.n.into(),
            r.lambda.into(),
            r.cost.into(),
            r.cg_iterations.into(),
            r.residual.into(),
            r.converged.into(),
            scan.interior_observability.constant.into(),
            r.bound_quantity.into(),
            r.exterior_cost.into(),
            r.exterior_converged.into(),
        ])?;
    }
    out.write_table("cost_scan.csv", &t)?;
    let mut ritz = Table::new(&["cutoff", "index", "ritz_value"]);
    for (name, est) in [
        ("interior", &scan.interior_observability),
        ("exterior", &scan.exterior_observability),
    ] {
        for (k, v) in est.ritz_values.iter().enumerate() {
            ritz.push(vec![name.into(), k.into(), (*v).into()])?;
        }
    }
    out.write_table("observability.csv", &ritz)?;
    let summary = json!({
        "cost_exponent": scan.cost_exponent,
        "bound_exponent": scan.bound_exponent,
        "monotone_from": scan.monotone_from,
        "exterior_spread": scan.exterior_spread(),
        "interior_observability": scan.interior_observability.constant,
        "exterior_observability": scan.exterior_observability.constant,
        "all_converged": scan.all_converged(),
    });
    let status = if scan.all_converged() {
        RunStatus::Ok
    } else {
        RunStatus::NumericalFailure
    };
    Ok(Outcome { status, summary })
}

fn run_scaling(cfg: &RunConfig, out: &mut ArtifactSet) -> Result<Outcome> {
    let res = scaling_family_check(&cfg.scaling)?;
    let mut t = Table::new(&[
        "eps",
        "l1",
        "l2",
        "l2_mu",
        "dx_l1",
        "dx_l2",
        "energy_scaled",
        "remainder",
        "err_l1",
        "err_l2",
        "excess_l2_mu",
        "err_dx_l1",
        "err_dx_l2",
    ]);
    for r in &res.rows {
        let mut row: Vec<Cell> = vec![
            r.eps.into(),
            r.l1.into(),
            r.l2.into(),
            r.l2_mu.into(),
            r.dx_l1.into(),
            r.dx_l2.into(),
            r.energy_scaled.into(),
            r.remainder.into(),
        ];
        row.extend(r.identity_errors.iter().map(|&e| Cell::Float(e)));
        t.push(row)?;
    }
    out.write_table("scaling.csv", &t)?;
    Ok(ok(json!({
        "remainder_slope": res.remainder_slope,
        "max_identity_error": res.max_identity_error,
        "reference": res.reference,
    })))
}

fn run_verify(cfg: &RunConfig, suites: &[String], out: &mut ArtifactSet) -> Result<Outcome> {
    let report = if suites.is_empty() {
        verify::run_all(cfg.verify.samples, cfg.seed)?
    } else {
        let mut r = verify::VerifyReport::default();
        for s in suites {
            r.checks.extend(verify::run_suite(s, cfg.verify.samples, cfg.seed)?);
        }
        r
    };
    out.write_table("verify.csv", &report.table())?;
    let summary = json!({
        "checks": report.checks.len(),
        "failures": report.failures(),
    });
    let status = if report.all_pass() {
        RunStatus::Ok
    } else {
        RunStatus::NumericalFailure
    };
    Ok(Outcome { status, summary })
}
