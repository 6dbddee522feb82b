//! Local controllability of the Hartree equation
//! `i u_t = L u + m(u)u + ψh` through the fixed-point map
//! `Γ(v) = w̃ + N(v)`, where `N(v)` is the Duhamel response to `m(v)v` and
//! `w̃` the linear HUM trajectory steering `u₀` to `u_T - N(v)(T)`.

use crate::error::{Error, Result};
use crate::field::{WaveField, C64};
use crate::hartree::HartreeKernel;
use crate::hum::{solve_control_for, solve_control_with, ControlSolution, LinearControlProblem, SOperator};
use crate::propagate::{CrankNicolson, Trajectory};
use serde::Serialize;

/// `N(v, 0, t)` for every node: zero data, forcing `m(v)v`.
pub fn nonlinear_term(
    v: &Trajectory,
    kernel: &HartreeKernel,
    cn: &CrankNicolson,
) -> Result<Trajectory> {
    let forcing = v
        .fields
        .iter()
        .map(|f| kernel.apply_nonlinear(f).map(|w| w.values))
        .collect::<Result<Vec<_>>>()?;
    let zero = WaveField::zeros(&v.first().grid);
    Ok(cn.evolve_forced_with(&zero, v.steps(), |n, buf| {
        buf.copy_from_slice(&forcing[n])
    }))
}

/// One application of `Γ`; returns the new trajectory and the linear
/// control solution behind it.
pub fn gamma_map(
    op: &SOperator<'_>,
    kernel: &HartreeKernel,
    v: &Trajectory,
) -> Result<(Trajectory, ControlSolution)> {
    let problem = op.problem();
    let cn = CrankNicolson::from_potential(&problem.potential, problem.dt)?;
    let n_term = nonlinear_term(v, kernel, &cn)?;
    let lin = solve_control_for(op, &problem.u0, &problem.target.sub(n_term.last()))?;
    let fields = lin
        .u
        .fields
        .iter()
        .zip(&n_term.fields)
        .map(|(a, b)| {
            let mut s = a.clone();
            s.axpy(C64::new(1.0, 0.0), b);
            s
        })
        .collect();
    Ok((
        Trajectory {
            dt: problem.dt,
            fields,
        },
        lin,
    ))
}

/// Settings of a fixed-point run.
#[derive(Debug, Clone)]
pub struct NonlinearSetup {
    pub problem: LinearControlProblem,
    pub kernel: HartreeKernel,
    /// stop when `d_k <= tol · sup_t ‖v^k‖_{W¹}`
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationRow {
    pub k: usize,
    pub distance: f64,
    pub ratio: Option<f64>,
}

/// Outcome of [`fixed_point_solve`].
#[derive(Debug, Clone)]
pub struct NonlinearControlRun {
    pub history: Vec<IterationRow>,
    pub converged: bool,
    pub iterations: usize,
    pub state: Trajectory,
    pub control: ControlSolution,
    /// state re-propagated from `u₀` by [`forward_nonlinear`] with the final control
    pub verified: Trajectory,
    /// `‖P(u(T) - u_T)‖_{W¹}/‖P u_T‖_{W¹}` for the verified state
    pub target_error: f64,
    /// `sup_t ‖u_verified - u_fixed‖_{W¹}`
    pub forward_mismatch: f64,
    /// measured `‖N(v,0,T)‖_{W¹} / sup‖v‖³_{W¹}` at the fixed point
    pub cubic_constant: f64,
}

impl NonlinearControlRun {
    /// Geometric mean of the contraction ratios above the roundoff floor.
    pub fn contraction_factor(&self) -> Option<f64> {
        let r: Vec<f64> = self
            .history
            .iter()
            .filter(|row| row.distance > 1e-13)
            .filter_map(|row| row.ratio)
            .collect();
        if r.is_empty() {
            None
        } else {
            Some((r.iter().map(|x| x.ln()).sum::<f64>() / r.len() as f64).exp())
        }
    }
}

fn energy_norm(problem: &LinearControlProblem, f: &WaveField) -> f64 {
    f.norm_energy(problem.basis.potential())
}

/// Picard iteration `v^{k+1} = Γ(v^k)` from the linear HUM trajectory.
pub fn fixed_point_solve(setup: &NonlinearSetup) -> Result<NonlinearControlRun> {
    let problem = &setup.problem;
    let kernel = &setup.kernel;
    let op = SOperator::new(problem)?;
    let first = solve_control_with(&op)?;
    let mut v = first.u.clone();
    let mut control = first;
    let mut history: Vec<IterationRow> = Vec::new();
    let mut converged = false;
    let mut bad_streak = 0;
    let mut k = 0;
    while k < setup.max_iter {
        let (next, lin) = gamma_map(&op, kernel, &v)?;
        let distance = next
            .fields
            .iter()
            .zip(&v.fields)
            .map(|(a, b)| energy_norm(problem, &a.sub(b)))
            .fold(0.0, f64::max);
        let size = v.sup_norm(|f| energy_norm(problem, f));
        let ratio = history
            .last()
            .filter(|row| row.distance > 0.0)
            .map(|row| distance / row.distance);
        history.push(IterationRow { k, distance, ratio });
        v = next;
        control = lin;
        k += 1;
        if distance <= setup.tol * size || distance == 0.0 {
            converged = true;
            break;
        }
        if ratio.is_some_and(|r| r >= 1.0) {
            bad_streak += 1;
            if bad_streak >= 3 {
                return Err(Error::NotContracting {
                    ratios: history.iter().filter_map(|r| r.ratio).collect(),
                });
            }
        } else {
            bad_streak = 0;
        }
    }
    let cn = CrankNicolson::from_potential(&problem.potential, problem.dt)?;
    let psi = &problem.cutoff.values;
    let verified = forward_nonlinear(&cn, kernel, &problem.u0, v.steps(), |n, buf| {
        for ((o, h), p) in buf.iter_mut().zip(&control.h.fields[n].values).zip(psi) {
            *o = h * p;
        }
    })?;
    let basis = &problem.basis;
    let err = basis.project_raw(&verified.last().sub(&problem.target).values);
    let target_norm = basis.norm_raw(&basis.project_raw(&problem.target.values), 1.0);
    let target_error = basis.norm_raw(&err, 1.0) / target_norm.max(f64::MIN_POSITIVE);
    let forward_mismatch = verified
        .fields
        .iter()
        .zip(&v.fields)
        .map(|(a, b)| energy_norm(problem, &a.sub(b)))
        .fold(0.0, f64::max);
    let n_term = nonlinear_term(&v, kernel, &cn)?;
    let sup_v = v.sup_norm(|f| energy_norm(problem, f));
    let cubic_constant = if sup_v > 0.0 {
        energy_norm(problem, n_term.last()) / sup_v.powi(3)
    } else {
        0.0
    };
    Ok(NonlinearControlRun {
        history,
        converged,
        iterations: k,
        state: v,
        control,
        verified,
        target_error,
        forward_mismatch,
        cubic_constant,
    })
}

/// Independent forward solver for `i u_t = L u + m(u)u + g`: the trapezoid
/// step is implicit in `u^{n+1}` and resolved by fixed-point sweeps.
pub fn forward_nonlinear(
    cn: &CrankNicolson,
    kernel: &HartreeKernel,
    u0: &WaveField,
    steps: usize,
    mut control: impl FnMut(usize, &mut Vec<C64>),
) -> Result<Trajectory> {
    let grid = u0.grid;
    let n = u0.len();
    let mut fields = Vec::with_capacity(steps + 1);
    fields.push(u0.clone());
    let mut g_now = vec![C64::new(0.0, 0.0); n];
    let mut g_next = g_now.clone();
    control(0, &mut g_now);
    let mut f_now = add(&g_now, &kernel.apply_nonlinear(u0)?.values);
    let mut scratch = Vec::new();
    for step in 0..steps {
        control(step + 1, &mut g_next);
        let prev = fields.last().expect("non-empty").values.clone();
        let mut nl = kernel.apply_nonlinear(&fields[step])?.values;
        let mut u = prev.clone();
        for sweep in 0..50 {
            let f_next = add(&g_next, &nl);
            let mut trial = prev.clone();
            cn.step_forced(&mut trial, &f_now, &f_next, &mut scratch);
            let change: f64 = trial.iter().zip(&u).map(|(a, b)| (a - b).norm_sqr()).sum();
            let size: f64 = trial.iter().map(|a| a.norm_sqr()).sum();
            u = trial;
            nl = kernel.apply_nonlinear(&WaveField::from_values(&grid, u.clone())?)?.values;
            if sweep >= 1 && change <= 1e-28 * size.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        f_now = add(&g_next, &nl);
        fields.push(WaveField::from_values(&grid, u)?);
    }
    Ok(Trajectory {
        dt: cn.dt,
        fields,
    })
}

fn add(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}
