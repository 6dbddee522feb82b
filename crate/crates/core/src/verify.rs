//! Desk-scale invariant suites behind the `verify` command. Each check
//! reports a measured value against a threshold.

use crate::airy::{self, radiation_bound_check};
use crate::domain::{build_cutoff, build_potential, CutoffKind, GridSpec, PotentialSpec};
use crate::error::Result;
use crate::estimates::{bump, commutator_residual, dispersive_ratios, semigroup_bounds};
use crate::experiments::{
    avron_identity_check, discrete_cost_scan, scaling_family_check, CostScanSpec, ScalingSpec,
};
use crate::field::{random_packet, WaveField, C64};
use crate::hartree::{verify_hartree_bounds, HartreeKernel, KernelSpec};
use crate::hum::{
    conjugated_solution, estimate_observability_with, multiplier_identity_check,
    s_symmetry_residual, solve_control_for, solve_control_with, LinearControlProblem, SOperator,
};
use crate::io::{Cell, Table};
use crate::nonlinear::{fixed_point_solve, forward_nonlinear, NonlinearSetup};
use crate::propagate::{AvronHerbst, CrankNicolson};
use crate::spectral::{assemble_and_decompose, metric_basis, MetricOperator};
use crate::stats::loglog_slope;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub suite: &'static str,
    pub check: String,
    pub value: f64,
    pub threshold: f64,
    /// `"<="` or `">="`
    pub relation: &'static str,
    pub pass: bool,
}

impl CheckRow {
    pub fn at_most(suite: &'static str, check: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            suite,
            check: check.into(),
            value,
            threshold,
            relation: "<=",
            pass: value <= threshold,
        }
    }

    pub fn at_least(suite: &'static str, check: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            suite,
            check: check.into(),
            value,
            threshold,
            relation: ">=",
            pass: value >= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct VerifyReport {
    pub checks: Vec<CheckRow>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.pass).count()
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&["suite", "check", "value", "relation", "threshold", "pass"]);
        for c in &self.checks {
            t.rows.push(vec![
                c.suite.into(),
                c.check.clone().into(),
                c.value.into(),
                c.relation.into(),
                c.threshold.into(),
                Cell::Bool(c.pass),
            ]);
        }
        t
    }
}

pub const SUITES: [&str; 10] = [
    "spectral",
    "radiation",
    "unitarity",
    "avron_herbst",
    "hartree",
    "hum",
    "observability",
    "multiplier",
    "nonlinear",
    "noncontrol",
];

/// Run every suite; `samples` random draws per randomized suite.
pub fn run_all(samples: usize, seed: u64) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    for suite in SUITES {
        report.checks.extend(run_suite(suite, samples, seed)?);
    }
    Ok(report)
}

pub fn run_suite(name: &str, samples: usize, seed: u64) -> Result<Vec<CheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fxhash(name));
    match name {
        "spectral" => spectral_suite(),
        "radiation" => radiation_suite(),
        "unitarity" => unitarity_suite(samples, &mut rng),
        "avron_herbst" => avron_suite(),
        "hartree" => hartree_suite(samples, &mut rng),
        "hum" => hum_suite(&mut rng),
        "observability" => observability_suite(),
        "multiplier" => multiplier_suite(),
        "nonlinear" => nonlinear_suite(),
        "noncontrol" => noncontrol_suite(),
        other => crate::error::invalid(format!("unknown suite {other}")),
    }
}

/// Stable per-suite stream offset.
fn fxhash(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

fn airy_errors(half_width: f64, dx: f64, count: usize) -> Result<f64> {
    let g = GridSpec::with_spacing(half_width, dx)?;
    let (_, basis) = metric_basis(&g, MetricOperator::AbsValue, count)?;
    let exact = airy::eigenvalues(count)?;
    Ok(basis
        .eigenvalues
        .iter()
        .zip(&exact)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

fn spectral_suite() -> Result<Vec<CheckRow>> {
    let coarse = airy_errors(15.0, 0.02, 11)?;
    let fine = airy_errors(15.0, 0.01, 11)?;
    let g = GridSpec::with_spacing(40.0, 0.02)?;
    let (_, basis) = metric_basis(&g, MetricOperator::AbsValue, 101)?;
    let ns: Vec<f64> = (20..=100).map(|n| n as f64).collect();
    let lams = &basis.eigenvalues[20..=100];
    let exponent = loglog_slope(&ns, lams);
    Ok(vec![
        CheckRow::at_most("spectral", "airy_max_error_n10_dx0.01", fine, 5e-3),
        CheckRow::at_least("spectral", "airy_error_ratio_dx_halved", coarse / fine, 3.0),
        CheckRow::at_most("spectral", "eigenvalue_exponent_minus_2/3", (exponent - 2.0 / 3.0).abs(), 0.02),
    ])
}

fn radiation_suite() -> Result<Vec<CheckRow>> {
    let g = GridSpec::with_spacing(30.0, 0.01)?;
    let rows = radiation_bound_check(50, (-5.0, 5.0), &g)?;
    let early = rows[25].running_max;
    let late = rows[50].running_max;
    Ok(vec![CheckRow::at_most(
        "radiation",
        "running_max_growth_n25_to_n50",
        late / early,
        1.5,
    )])
}

fn unitarity_suite(samples: usize, rng: &mut ChaCha8Rng) -> Result<Vec<CheckRow>> {
    let g = GridSpec::with_spacing(10.0, 0.05)?;
    let mu = build_potential(&g, &PotentialSpec::WeightMu)?;
    let cn = CrankNicolson::from_potential(&mu, 1e-3)?;
    let mut u = WaveField::gaussian(&g, 1.0, 1.0, 0.7, 2.0).values;
    let m0 = WaveField::from_values(&g, u.clone())?.norm_l2().powi(2);
    let mut scratch = Vec::new();
    let mut prev = m0;
    let mut per_step = 0.0_f64;
    for _ in 0..10_000 {
        cn.step(&mut u, &mut scratch);
        let m = WaveField::from_values(&g, u.clone())?.norm_l2().powi(2);
        per_step = per_step.max((m - prev).abs() / m0);
        prev = m;
    }
    let total = (prev - m0).abs() / m0;
    let alpha = build_potential(&g, &PotentialSpec::AbsValue)?;
    let mut passes = [0usize; 3];
    for _ in 0..samples {
        let phi = random_packet(&g, rng, 6.0);
        let t = 1e-2 * rng.random_range(1..=100) as f64;
        let rows = semigroup_bounds(&[phi], &[t], &alpha, 1e-2)?;
        for (p, ok) in passes.iter_mut().zip(rows[0].passes()) {
            *p += ok as usize;
        }
    }
    let n = samples as f64;
    Ok(vec![
        CheckRow::at_most("unitarity", "cn_mass_drift_per_step", per_step, 1e-12),
        CheckRow::at_most("unitarity", "cn_mass_drift_10000_steps", total, 1e-9),
        CheckRow::at_least("unitarity", "semigroup_grad_bound_pass_fraction", passes[0] as f64 / n, 1.0),
        CheckRow::at_least("unitarity", "semigroup_weighted_bound_pass_fraction", passes[1] as f64 / n, 1.0),
        CheckRow::at_least("unitarity", "semigroup_h_bound_pass_fraction", passes[2] as f64 / n, 1.0),
    ])
}

fn avron_suite() -> Result<Vec<CheckRow>> {
    let g = GridSpec::with_spacing(30.0, 0.05)?;
    let f = WaveField::gaussian(&g, 1.0, 0.0, 1.0, 0.0);
    let moved = AvronHerbst::new(&g, 1.0).apply(&f, 1.0)?;
    let pts = g.points();
    let mass: f64 = moved.values.iter().map(|z| z.norm_sqr()).sum();
    let center: f64 = moved
        .values
        .iter()
        .zip(&pts)
        .map(|(z, x)| x * z.norm_sqr())
        .sum::<f64>()
        / mass;

    let wide = GridSpec::with_spacing(300.0, 0.1)?;
    let gauss = WaveField::gaussian(&wide, 1.0, 0.0, 1.0, 0.0);
    let times: Vec<f64> = (1..=10).map(|t| t as f64).collect();
    let worst = dispersive_ratios(&gauss, &times)?.into_iter().fold(0.0, f64::max);

    let bump_grid = GridSpec::with_spacing(150.0, 0.02)?;
    let b = bump(&bump_grid, 4.0);
    let commutator = [0.5, 1.0]
        .iter()
        .map(|&r| commutator_residual(&b, r).map(|c| c.unitary_form))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);

    let id_grid = GridSpec::with_spacing(40.0, 0.05)?;
    let fields = [
        WaveField::gaussian(&id_grid, 1.0, 0.0, 1.0, 0.0),
        WaveField::gaussian(&id_grid, 1.0, -1.0, 0.8, 1.0),
    ];
    let mut identity = 0.0_f64;
    for (r, s) in [(0.0, 0.0), (0.3, -0.3), (0.5, 0.5)] {
        identity = identity.max(avron_identity_check(r, s, &fields)?.unitary_form);
    }
    Ok(vec![
        CheckRow::at_most("avron_herbst", "center_displacement_error_t1", (center - 1.0).abs(), 1e-4),
        CheckRow::at_most("avron_herbst", "dispersive_ratio_max_t1_to_10", worst, 0.29),
        CheckRow::at_most("avron_herbst", "commutator_residual", commutator, 1e-6),
        CheckRow::at_most("avron_herbst", "conjugated_laplacian_identity_residual", identity, 1e-6),
    ])
}

fn hartree_suite(samples: usize, rng: &mut ChaCha8Rng) -> Result<Vec<CheckRow>> {
    let g = GridSpec::with_spacing(10.0, 0.05)?;
    let kernel = HartreeKernel::build(&g, KernelSpec::PoissonSplit)?;
    let pairs: Vec<(WaveField, WaveField)> = (0..samples)
        .map(|_| (random_packet(&g, rng, 6.0), random_packet(&g, rng, 6.0)))
        .collect();
    let report = verify_hartree_bounds(&kernel, &pairs)?;
    let mut prefix = 0.0_f64;
    for (a, _) in pairs.iter().take(5) {
        let fast = kernel.m_of(a)?;
        let slow = kernel.m_of_direct(a)?;
        let scale = slow.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
        let d = fast.iter().zip(&slow).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
        prefix = prefix.max(d / scale);
    }
    let n = samples as f64;
    Ok(vec![
        CheckRow::at_least("hartree", "sup_bound_pass_fraction", report.sup_pass as f64 / n, 1.0),
        CheckRow::at_least("hartree", "lipschitz_bound_pass_fraction", report.lipschitz_pass as f64 / n, 1.0),
        CheckRow::at_most("hartree", "prefix_vs_direct_quadrature", prefix, 1e-10),
    ])
}

fn small_problem(kind: CutoffKind, radius: f64, dx: f64, n_modes: usize) -> Result<LinearControlProblem> {
    let g = GridSpec::with_spacing(8.0, dx)?;
    let mu = build_potential(&g, &PotentialSpec::WeightMu)?;
    let (_, basis) = assemble_and_decompose(&g, &mu, n_modes)?;
    Ok(LinearControlProblem {
        u0: WaveField::gaussian(&g, 1.0, -1.0, 1.0, 0.0),
        target: WaveField::gaussian(&g, 1.0, 1.0, 1.0, 0.0),
        horizon: 1.0,
        cutoff: build_cutoff(&g, kind, radius)?,
        potential: mu,
        dt: 5e-3,
        basis: Arc::new(basis),
        cg_tol: 1e-10,
        cg_max_iter: 1000,
    })
}

fn hum_suite(rng: &mut ChaCha8Rng) -> Result<Vec<CheckRow>> {
    let problem = small_problem(CutoffKind::Exterior, 2.0, 0.1, 48)?;
    let op = SOperator::new(&problem)?;
    let sol = solve_control_with(&op)?;
    let n = op.n_modes();
    let mut draw = || -> Vec<C64> {
        (0..n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    };
    let mut symmetry = 0.0_f64;
    let mut min_form = f64::INFINITY;
    for _ in 0..5 {
        let (a, b) = (draw(), draw());
        symmetry = symmetry.max(s_symmetry_residual(&op, &a, &b));
        let sa = op.apply(&a);
        let form: f64 = a.iter().zip(&sa).map(|(x, y)| (x.conj() * y).re).sum();
        min_form = min_form.min(form);
    }
    // independent re-propagation: grid solver, no basis
    let cn = CrankNicolson::from_potential(&problem.potential, problem.dt)?;
    let zero_kernel = HartreeKernel::build(&problem.u0.grid, KernelSpec::Zero)?;
    let psi = &problem.cutoff.values;
    let replay = forward_nonlinear(&cn, &zero_kernel, &problem.u0, problem.steps()?, |k, buf| {
        for ((o, h), p) in buf.iter_mut().zip(&sol.h.fields[k].values).zip(psi) {
            *o = h * p;
        }
    })?;
    let basis = &problem.basis;
    let gap = basis.norm_raw(&basis.project_raw(&replay.last().sub(&problem.target).values), 1.0)
        / basis.norm_raw(&basis.project_raw(&problem.target.values), 1.0);
    // drift-matched target and linearity
    let drift = cn.evolve(&problem.u0, problem.steps()?).last().clone();
    let drift_cost = solve_control_for(&op, &problem.u0, &drift)?.cost;
    let two = C64::new(2.0, 0.0);
    let doubled = solve_control_for(&op, &problem.u0.scaled(two), &problem.target.scaled(two))?;
    let lin: f64 = doubled
        .v0_opt
        .coeffs
        .iter()
        .zip(&sol.v0_opt.coeffs)
        .map(|(a, b)| (a - b * 2.0).norm())
        .fold(0.0, f64::max)
        / sol.v0_opt.coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(vec![
        CheckRow::at_most("hum", "relative_target_error", sol.relative_target_error, 1e-6),
        CheckRow::at_most("hum", "s_symmetry_residual", symmetry, 1e-9),
        CheckRow::at_least("hum", "s_quadratic_form_min", min_form, 0.0),
        CheckRow::at_most("hum", "independent_replay_target_error", gap, 1e-6),
        CheckRow::at_most("hum", "drift_matched_cost", drift_cost, 0.0),
        CheckRow::at_most("hum", "linearity_defect", lin, 1e-10),
    ])
}

fn observability_suite() -> Result<Vec<CheckRow>> {
    let coarse = small_problem(CutoffKind::Exterior, 2.0, 0.1, 32)?;
    let fine = small_problem(CutoffKind::Exterior, 2.0, 0.05, 32)?;
    let unit = small_problem(CutoffKind::Unit, 2.0, 0.1, 32)?;
    let c = estimate_observability_with(&SOperator::new(&coarse)?, 32)?.constant;
    let f = estimate_observability_with(&SOperator::new(&fine)?, 32)?.constant;
    let u = estimate_observability_with(&SOperator::new(&unit)?, 32)?;
    Ok(vec![
        CheckRow::at_least("observability", "exterior_constant", c, 1e-8),
        CheckRow::at_most("observability", "exterior_refinement_change", (c - f).abs() / f, 0.1),
        CheckRow::at_most("observability", "unit_cutoff_minus_horizon", (u.constant - 1.0).abs(), 1e-6),
    ])
}

fn multiplier_suite() -> Result<Vec<CheckRow>> {
    let mut res = Vec::new();
    for (dx, dt) in [(0.04, 2e-3), (0.02, 1e-3)] {
        let g = GridSpec::with_spacing(10.0, dx)?;
        let alpha = build_potential(&g, &PotentialSpec::AbsValue)?;
        let q = build_cutoff(&g, CutoffKind::MultiplierQ, 2.0)?;
        let w0 = WaveField::gaussian(&g, 1.0, 0.5, 0.8, 1.0);
        let w = conjugated_solution(&alpha, &w0, dt, (0.5 / dt).round() as usize)?;
        res.push(multiplier_identity_check(&w, &q, &alpha, None)?.residual);
    }
    Ok(vec![
        CheckRow::at_most("multiplier", "identity_residual_fine", res[1], 1e-3),
        CheckRow::at_least("multiplier", "residual_ratio_on_halving", res[0] / res[1], 3.0),
    ])
}

fn nonlinear_suite() -> Result<Vec<CheckRow>> {
    let g = GridSpec::with_spacing(10.0, 0.1)?;
    let mu = build_potential(&g, &PotentialSpec::WeightMu)?;
    let (_, basis) = assemble_and_decompose(&g, &mu, 64)?;
    let problem = LinearControlProblem {
        u0: WaveField::gaussian(&g, 0.05, -1.0, 1.0, 0.0),
        target: WaveField::gaussian(&g, 0.05, 1.0, 1.0, 0.0),
        horizon: 1.0,
        cutoff: build_cutoff(&g, CutoffKind::Exterior, 2.0)?,
        potential: mu,
        dt: 5e-3,
        basis: Arc::new(basis),
        cg_tol: 1e-12,
        cg_max_iter: 1000,
    };
    let setup = NonlinearSetup {
        kernel: HartreeKernel::build(&g, KernelSpec::PoissonSplit)?,
        problem,
        tol: 1e-8,
        max_iter: 30,
    };
    let run = fixed_point_solve(&setup)?;
    Ok(vec![
        CheckRow::at_most("nonlinear", "iterations", run.iterations as f64, 10.0),
        CheckRow::at_most("nonlinear", "verified_target_error", run.target_error, 1e-6),
        CheckRow::at_most("nonlinear", "contraction_factor", run.contraction_factor().unwrap_or(0.0), 1.0),
    ])
}

fn noncontrol_suite() -> Result<Vec<CheckRow>> {
    let scan = discrete_cost_scan(&CostScanSpec::default())?;
    let first = &scan.rows[0];
    let last = scan.rows.last().expect("non-empty scan");
    let bound_decreasing = scan
        .rows
        .windows(2)
        .all(|w| w[1].bound_quantity < w[0].bound_quantity);
    let scaling = scaling_family_check(&ScalingSpec::default())?;
    Ok(vec![
        CheckRow::at_least("noncontrol", "interior_cost_growth_n2_to_n8", last.cost / first.cost, 2.0),
        CheckRow::at_least("noncontrol", "bound_quantity_decreasing", bound_decreasing as u8 as f64, 1.0),
        CheckRow::at_most("noncontrol", "exterior_cost_spread", scan.exterior_spread(), 2.0),
        CheckRow::at_most("noncontrol", "scaling_identity_max_error", scaling.max_identity_error, 1e-8),
        CheckRow::at_most("noncontrol", "remainder_slope_minus_one", (scaling.remainder_slope - 1.0).abs(), 0.3),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_relations() {
        assert!(CheckRow::at_most("s", "c", 1.0, 1.0).pass);
        assert!(!CheckRow::at_most("s", "c", 1.1, 1.0).pass);
        assert!(CheckRow::at_least("s", "c", 1.0, 1.0).pass);
        assert!(!CheckRow::at_least("s", "c", f64::NAN, 1.0).pass);
    }

    #[test]
    fn unknown_suite_is_an_error() {
        assert!(run_suite("nope", 1, 0).is_err());
    }
}
