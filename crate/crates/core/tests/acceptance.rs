//! Acceptance run: one PASS/FAIL line per criterion, then a tally.
//! Failing criteria are reported, not hidden; the process only fails when a
//! criterion cannot be evaluated at all.

use hartree_control::airy::{self, radiation_bound_check};
use hartree_control::domain::{build_cutoff, build_potential, CutoffKind, GridSpec, PotentialSpec};
use hartree_control::experiments::{discrete_cost_scan, scaling_family_check, CostScanSpec, ScalingSpec};
use hartree_control::hartree::{HartreeKernel, KernelSpec};
use hartree_control::hum::{
    estimate_observability_with, s_symmetry_residual, solve_control_for, solve_control_with, LinearControlProblem,
    SOperator,
};
use hartree_control::nonlinear::{fixed_point_solve, NonlinearSetup};
use hartree_control::propagate::CrankNicolson;
use hartree_control::spectral::{assemble_and_decompose, metric_basis, MetricOperator};
use hartree_control::stats::loglog_slope;
use hartree_control::verify::{run_suite, CheckRow};
use hartree_control::{Result, WaveField, C64};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

const SEED: u64 = 20240611;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn from_rows(rows: &[CheckRow]) -> Verdict {
    let detail = rows
        .iter()
        .map(|r| format!("{}={:.3e}", r.check, r.value))
        .collect::<Vec<_>>()
        .join(" ");
    verdict(rows.iter().all(|r| r.pass), detail)
}

fn airy_spectrum() -> Result<Verdict> {
    let err = |dx: f64| -> Result<f64> {
        let g = GridSpec::with_spacing(30.0, dx)?;
        let (_, basis) = metric_basis(&g, MetricOperator::AbsValue, 11)?;
        let exact = airy::eigenvalues(11)?;
        Ok(basis
            .eigenvalues
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    };
    let fine = err(0.01)?;
    let coarse = err(0.02)?;
    Ok(verdict(
        fine <= 5e-3 && coarse / fine >= 3.0,
        format!("max_err(dx=0.01)={fine:.3e} ratio(dx halved)={:.2}", coarse / fine),
    ))
}

fn eigenvalue_growth() -> Result<Verdict> {
    let g = GridSpec::with_spacing(120.0, 0.02)?;
    let (_, basis) = metric_basis(&g, MetricOperator::AbsValue, 201)?;
    let ns: Vec<f64> = (20..=200).map(|n| n as f64).collect();
    let p = loglog_slope(&ns, &basis.eigenvalues[20..=200]);
    Ok(verdict((p - 2.0 / 3.0).abs() <= 0.02, format!("exponent={p:.4}")))
}

fn radiation() -> Result<Verdict> {
    let g = GridSpec::with_spacing(30.0, 0.01)?;
    let rows = radiation_bound_check(50, (-5.0, 5.0), &g)?;
    let growth = rows[50].running_max / rows[25].running_max;
    Ok(verdict(
        growth <= 1.5,
        format!("running_max(25)={:.4} running_max(50)={:.4} growth={growth:.3}", rows[25].running_max, rows[50].running_max),
    ))
}

fn hum_problem(dx: f64, dt: f64, n_modes: usize, kind: CutoffKind) -> Result<LinearControlProblem> {
    let g = GridSpec::with_spacing(10.0, dx)?;
    let mu = build_potential(&g, &PotentialSpec::WeightMu)?;
    let (_, basis) = assemble_and_decompose(&g, &mu, n_modes)?;
    Ok(LinearControlProblem {
        u0: WaveField::gaussian(&g, 1.0, -1.0, 1.0, 0.0),
        target: WaveField::gaussian(&g, 1.0, 1.0, 1.0, 0.0),
        horizon: 1.0,
        cutoff: build_cutoff(&g, kind, 2.0)?,
        potential: mu,
        dt,
        basis: Arc::new(basis),
        cg_tol: 1e-12,
        cg_max_iter: 2000,
    })
}

fn linear_hum() -> Result<Verdict> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool");
    pool.install(|| {
        let clock = Instant::now();
        let problem = hum_problem(0.02, 5e-4, 256, CutoffKind::Exterior)?;
        let op = SOperator::new(&problem)?;
        let sol = solve_control_with(&op)?;
        let elapsed = clock.elapsed().as_secs_f64();
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        let n = op.n_modes();
        let mut symmetry = 0.0_f64;
        for _ in 0..3 {
            let mut draw = || -> Vec<C64> {
                (0..n)
                    .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect()
            };
            let (a, b) = (draw(), draw());
            symmetry = symmetry.max(s_symmetry_residual(&op, &a, &b));
        }
        let cn = CrankNicolson::from_potential(&problem.potential, problem.dt)?;
        let drift = cn.evolve(&problem.u0, problem.steps()?).last().clone();
        let matched = solve_control_for(&op, &problem.u0, &drift)?;
        let h_max = matched.h.sup_norm(|f| f.norm_linf());
        Ok(verdict(
            sol.relative_target_error <= 1e-6 && symmetry <= 1e-9 && h_max == 0.0 && elapsed <= 600.0,
            format!(
                "target_error={:.3e} symmetry={symmetry:.3e} drift_matched_sup_h={h_max:.1e} cg_iter={} solve_time={elapsed:.1}s",
                sol.relative_target_error, sol.cg_iterations
            ),
        ))
    })
}

fn observability() -> Result<Verdict> {
    let mut exterior = Vec::new();
    for dx in [0.1, 0.05, 0.025] {
        let p = hum_problem(dx, 5e-3, 64, CutoffKind::Exterior)?;
        exterior.push(estimate_observability_with(&SOperator::new(&p)?, 64)?.constant);
    }
    let stable = exterior.iter().all(|c| *c > 0.0)
        && exterior.windows(2).all(|w| (w[1] - w[0]).abs() <= 0.1 * w[1].abs());
    let mut interior = Vec::new();
    for n in [64, 128, 256] {
        let p = hum_problem(0.05, 5e-3, n, CutoffKind::Interior)?;
        interior.push(estimate_observability_with(&SOperator::new(&p)?, n)?.constant);
    }
    let decreasing = interior.windows(2).all(|w| w[1] < w[0]);
    Ok(verdict(
        stable && decreasing,
        format!("exterior={} interior={}", sci(&exterior), sci(&interior)),
    ))
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn nonlinear_setup(amp: f64) -> Result<NonlinearSetup> {
    let g = GridSpec::with_spacing(20.0, 0.04)?;
    let mu = build_potential(&g, &PotentialSpec::WeightMu)?;
    let (_, basis) = assemble_and_decompose(&g, &mu, 128)?;
    Ok(NonlinearSetup {
        problem: LinearControlProblem {
            u0: WaveField::gaussian(&g, amp, -1.0, 1.0, 0.0),
            target: WaveField::gaussian(&g, amp, 1.0, 1.0, 0.0),
            horizon: 1.0,
            cutoff: build_cutoff(&g, CutoffKind::Exterior, 2.0)?,
            potential: mu,
            dt: 2e-3,
            basis: Arc::new(basis),
            cg_tol: 1e-12,
            cg_max_iter: 2000,
        },
        kernel: HartreeKernel::build(&g, KernelSpec::PoissonSplit)?,
        tol: 1e-8,
        max_iter: 30,
    })
}

fn nonlinear() -> Result<Verdict> {
    let main = fixed_point_solve(&nonlinear_setup(0.05)?)?;
    let half = fixed_point_solve(&nonlinear_setup(0.025)?)?;
    let (r1, r2) = (
        main.contraction_factor().unwrap_or(f64::NAN),
        half.contraction_factor().unwrap_or(f64::NAN),
    );
    let scale = r1 / r2;
    Ok(verdict(
        main.converged && main.iterations <= 10 && main.target_error <= 1e-6 && (2.0..=6.0).contains(&scale),
        format!(
            "iterations={} target_error={:.3e} ratio(0.025)={r2:.4} ratio(0.05)={r1:.4} scale={scale:.2}",
            main.iterations, main.target_error
        ),
    ))
}

fn noncontrol() -> Result<Verdict> {
    let scan = discrete_cost_scan(&CostScanSpec::default())?;
    let costs: Vec<f64> = scan.rows.iter().map(|r| r.cost).collect();
    let strictly = costs.windows(2).all(|w| w[1] > w[0]);
    let growth = costs[costs.len() - 1] / costs[0];
    let bound_down = scan.rows.windows(2).all(|w| w[1].bound_quantity < w[0].bound_quantity);
    let spread = scan.exterior_spread();
    Ok(verdict(
        strictly && growth >= 2.0 && bound_down && spread <= 2.0,
        format!("interior_growth={growth:.1} strictly_increasing={strictly} bound_decreasing={bound_down} exterior_spread={spread:.3}"),
    ))
}

fn scaling() -> Result<Verdict> {
    let res = scaling_family_check(&ScalingSpec::default())?;
    Ok(verdict(
        res.max_identity_error <= 1e-8 && (res.remainder_slope - 1.0).abs() <= 0.3,
        format!("max_identity_error={:.2e} slope={:.3}", res.max_identity_error, res.remainder_slope),
    ))
}

fn determinism() -> Result<Verdict> {
    let root = tempfile::tempdir()?;
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let out = root.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_hartree-control"))
            .args(["--seed", "11", "--out"])
            .arg(&out)
            .arg("verify")
            .status()?;
        if status.code() != Some(0) && status.code() != Some(2) {
            return Ok(verdict(false, format!("verify exited with {status}")));
        }
        files.push(std::fs::read(out.join("verify.csv"))?);
    }
    Ok(verdict(
        files[0] == files[1],
        format!("verify.csv bytes={} identical={}", files[0].len(), files[0] == files[1]),
    ))
}

fn main() {
    type Criterion = (&'static str, fn() -> Result<Verdict>);
    let criteria: [Criterion; 12] = [
        ("airy_spectral_match", airy_spectrum),
        ("eigenvalue_asymptotics", eigenvalue_growth),
        ("radiation_bound", radiation),
        ("unitarity", || Ok(from_rows(&run_suite("unitarity", 100, SEED)?))),
        ("avron_herbst", || Ok(from_rows(&run_suite("avron_herbst", 100, SEED)?))),
        ("hartree_estimates", || Ok(from_rows(&run_suite("hartree", 100, SEED)?))),
        ("linear_hum", linear_hum),
        ("observability_constant", observability),
        ("nonlinear_fixed_point", nonlinear),
        ("interior_cost_signature", noncontrol),
        ("scaling_family", scaling),
        ("determinism", determinism),
    ];
    let mut passed = 0;
    let mut broken = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let clock = Instant::now();
        match check() {
            Ok(v) => {
                passed += v.pass as usize;
                let tag = if v.pass { "PASS" } else { "FAIL" };
                println!("{tag} {:>2} {name}: {} [{:.1}s]", k + 1, v.detail, clock.elapsed().as_secs_f64());
            }
            Err(e) => {
                broken += 1;
                println!("FAIL {:>2} {name}: error: {e}", k + 1);
            }
        }
    }
    println!("acceptance: {passed}/{} criteria pass", criteria.len());
    if broken > 0 {
        std::process::exit(1);
    }
}
