//! HUM control synthesis: adjoint flow, control extraction `h = Λ⁻¹(ψv)`,
//! the duality operator `S`, its CG inversion and the observability constant.
//!
//! Controls live in the span of the metric basis. `S` maps the adjoint datum
//! `v₀ ∈ W^{-1}` (coefficients) to `-i w₂(0)` projected on the same span, so
//! it is a Hermitian positive semidefinite `n_modes × n_modes` operator for
//! the plain coefficient pairing.

use crate::domain::{CutoffField, PotentialField};
use crate::error::{invalid, Error, Result};
use crate::field::{inner_raw, WaveField, C64};
use crate::propagate::{step_count, trapezoid, CrankNicolson, Trajectory};
use crate::spectral::{apply_p_grid, RieszPower, SobolevOrder, SpectralBasis, WkVector};
use crate::tridiag::ql_eigen;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cell::Cell;
use std::sync::Arc;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Data of the linear control problem `i u_t = L u + ψ h`, `u(0)=u₀`, `u(T)=u_T`.
#[derive(Debug, Clone)]
pub struct LinearControlProblem {
    pub u0: WaveField,
    pub target: WaveField,
    pub horizon: f64,
    pub cutoff: CutoffField,
    /// potential `α` of the dynamics
    pub potential: PotentialField,
    pub dt: f64,
    pub basis: Arc<SpectralBasis>,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl LinearControlProblem {
    pub fn steps(&self) -> Result<usize> {
        step_count(self.horizon, self.dt)
    }

    pub fn validate(&self) -> Result<usize> {
        let g = self.basis.grid;
        for (name, grid) in [
            ("u0", self.u0.grid),
            ("target", self.target.grid),
            ("cutoff", self.cutoff.grid),
            ("potential", self.potential.grid),
        ] {
            if grid != g {
                return invalid(format!("{name} grid differs from basis grid"));
            }
        }
        if self.cg_tol.is_nan() || self.cg_tol <= 0.0 || self.cg_max_iter == 0 {
            return invalid("cg_tol and cg_max_iter must be positive");
        }
        self.steps()
    }

    /// True when the dynamics share the metric operator, so the flow is
    /// diagonal in the basis.
    pub fn diagonal_flow(&self) -> bool {
        self.basis.potential() == self.potential.values.as_slice()
    }

    fn propagator(&self) -> Result<CrankNicolson> {
        CrankNicolson::from_potential(&self.potential, self.dt)
    }
}

/// How `S` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SPath {
    /// Closed-form assembly from the Crank-Nicolson phases (diagonal flow only).
    Spectral,
    /// Matrix-free forward/backward solves on the grid.
    Grid,
}

/// The duality operator `S` of one problem, with solve counters.
pub struct SOperator<'a> {
    problem: &'a LinearControlProblem,
    path: SPath,
    steps: usize,
    cn: CrankNicolson,
    /// `⟨φ_j, ψ φ_k⟩`, row-major (spectral path)
    psi_matrix: Vec<f64>,
    dense: Vec<C64>,
    forward_solves: Cell<usize>,
    backward_solves: Cell<usize>,
}

impl<'a> SOperator<'a> {
    /// Spectral path when available, grid path otherwise.
    pub fn new(problem: &'a LinearControlProblem) -> Result<Self> {
        let path = if problem.diagonal_flow() {
            SPath::Spectral
        } else {
            SPath::Grid
        };
        Self::with_path(problem, path)
    }

    pub fn with_path(problem: &'a LinearControlProblem, path: SPath) -> Result<Self> {
        let steps = problem.validate()?;
        if path == SPath::Spectral && !problem.diagonal_flow() {
            return invalid("spectral S needs the dynamics potential to equal the metric potential");
        }
        let mut op = Self {
            problem,
            path,
            steps,
            cn: problem.propagator()?,
            psi_matrix: Vec::new(),
            dense: Vec::new(),
            forward_solves: Cell::new(0),
            backward_solves: Cell::new(0),
        };
        if path == SPath::Spectral {
            op.psi_matrix = cutoff_matrix(&problem.basis, &problem.cutoff.values);
            op.dense = op.assemble_dense();
        }
        Ok(op)
    }

    pub fn problem(&self) -> &'a LinearControlProblem {
        self.problem
    }

    pub fn path(&self) -> SPath {
        self.path
    }

    pub fn n_modes(&self) -> usize {
        self.problem.basis.n_modes()
    }

    pub fn forward_solves(&self) -> usize {
        self.forward_solves.get()
    }

    pub fn backward_solves(&self) -> usize {
        self.backward_solves.get()
    }

    /// CN phase angles `arg z_k`, `z = (1 - iτλ/2)/(1 + iτλ/2)`.
    fn phases(&self) -> Vec<f64> {
        let tau = self.problem.dt;
        self.problem
            .basis
            .eigenvalues
            .iter()
            .map(|l| -2.0 * (0.5 * tau * l).atan())
            .collect()
    }

    fn assemble_dense(&self) -> Vec<C64> {
        let basis = &self.problem.basis;
        let n = basis.n_modes();
        let lam = &basis.eigenvalues;
        let m = &self.psi_matrix;
        let theta = self.phases();
        let tau = self.problem.dt;
        let big_m = self.steps as f64;
        // A = M Λ⁻¹ M
        let rows: Vec<Vec<C64>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut row = vec![ZERO; n];
                for (k, slot) in row.iter_mut().enumerate() {
                    let a: f64 = (0..n).map(|l| m[j * n + l] * m[l * n + k] / lam[l]).sum();
                    let d = theta[k] - theta[j];
                    // trapezoid sum Σ' e^{i d n}, n = 0..M, in closed form
                    let g = if d.abs() < 1e-13 {
                        C64::new(big_m, 0.0)
                    } else {
                        C64::from_polar(
                            (0.5 * big_m * d).sin() / (0.5 * d).tan(),
                            0.5 * big_m * d,
                        )
                    };
                    *slot = g * (tau * a);
                }
                row
            })
            .collect();
        rows.into_iter().flatten().collect()
    }

    /// `S c` for adjoint coefficients `c` (W^{-1}); result in W¹ coefficients.
    pub fn apply(&self, c: &[C64]) -> Vec<C64> {
        match self.path {
            SPath::Spectral => {
                let n = c.len();
                self.forward_solves.set(self.forward_solves.get() + 1);
                self.backward_solves.set(self.backward_solves.get() + 1);
                (0..n)
                    .map(|j| {
                        self.dense[j * n..(j + 1) * n]
                            .iter()
                            .zip(c)
                            .map(|(a, b)| a * b)
                            .sum()
                    })
                    .collect()
            }
            SPath::Grid => self.apply_grid(c),
        }
    }

    /// Grid forcing `ψ Λ⁻¹ P(ψ v)` and the coefficients `Λ⁻¹ P(ψ v)`.
    fn forcing_from_adjoint(&self, v: &[C64]) -> (Vec<C64>, Vec<C64>) {
        let basis = &self.problem.basis;
        let psi = &self.problem.cutoff.values;
        let pv: Vec<C64> = v.iter().zip(psi).map(|(a, p)| a * p).collect();
        let coeffs: Vec<C64> = basis
            .project_raw(&pv)
            .into_iter()
            .zip(&basis.eigenvalues)
            .map(|(c, l)| c / l)
            .collect();
        let h = basis.expand_raw(&coeffs);
        let f = h.iter().zip(psi).map(|(a, p)| a * p).collect();
        (f, coeffs)
    }

    fn apply_grid(&self, c: &[C64]) -> Vec<C64> {
        let basis = &self.problem.basis;
        let mut v = basis.expand_raw(c);
        let mut scratch = Vec::new();
        for _ in 0..self.steps {
            self.cn.step(&mut v, &mut scratch);
        }
        self.forward_solves.set(self.forward_solves.get() + 1);
        let mut f_next = self.forcing_from_adjoint(&v).0;
        let mut w = vec![ZERO; v.len()];
        for _ in 0..self.steps {
            // v is rebuilt backwards instead of stored
            self.cn.step_back(&mut v, &mut scratch);
            let f_now = self.forcing_from_adjoint(&v).0;
            self.cn.step_forced_back(&mut w, &f_now, &f_next, &mut scratch);
            f_next = f_now;
        }
        self.backward_solves.set(self.backward_solves.get() + 1);
        basis
            .project_raw(&w)
            .into_iter()
            .map(|z| z * C64::new(0.0, -1.0))
            .collect()
    }

    /// Control coefficients `ĥ(t_n) = Λ⁻¹ P(ψ v(t_n))`, `n = 0..=M`.
    pub fn control_coefficients(&self, c: &[C64]) -> Vec<Vec<C64>> {
        let basis = &self.problem.basis;
        let n = basis.n_modes();
        match self.path {
            SPath::Spectral => {
                let theta = self.phases();
                let m = &self.psi_matrix;
                (0..=self.steps)
                    .into_par_iter()
                    .map(|step| {
                        let vz: Vec<C64> = c
                            .iter()
                            .zip(&theta)
                            .map(|(a, th)| a * C64::from_polar(1.0, th * step as f64))
                            .collect();
                        (0..n)
                            .map(|j| {
                                let s: C64 =
                                    m[j * n..(j + 1) * n].iter().zip(&vz).map(|(a, b)| b * a).sum();
                                s / basis.eigenvalues[j]
                            })
                            .collect()
                    })
                    .collect()
            }
            SPath::Grid => {
                let mut v = basis.expand_raw(c);
                let mut scratch = Vec::new();
                let mut out = Vec::with_capacity(self.steps + 1);
                out.push(self.forcing_from_adjoint(&v).1);
                for _ in 0..self.steps {
                    self.cn.step(&mut v, &mut scratch);
                    out.push(self.forcing_from_adjoint(&v).1);
                }
                self.forward_solves.set(self.forward_solves.get() + 1);
                out
            }
        }
    }
}

/// `⟨φ_j, ψ φ_k⟩` for all pairs, row-major.
pub fn cutoff_matrix(basis: &SpectralBasis, psi: &[f64]) -> Vec<f64> {
    let n = basis.n_modes();
    let dx = basis.grid.dx();
    let weighted: Vec<Vec<f64>> = (0..n)
        .map(|k| basis.mode(k).iter().zip(psi).map(|(a, p)| a * p).collect())
        .collect();
    let mut m = vec![0.0; n * n];
    let rows: Vec<(usize, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mj = basis.mode(j);
            let row = (0..=j)
                .map(|k| mj.iter().zip(&weighted[k]).map(|(a, b)| a * b).sum::<f64>() * dx)
                .collect();
            (j, row)
        })
        .collect();
    for (j, row) in rows {
        for (k, v) in row.into_iter().enumerate() {
            m[j * n + k] = v;
            m[k * n + j] = v;
        }
    }
    m
}

/// Adjoint flow `i v_t = L v` from `v₀` over `[0, T]`, on the grid.
pub fn adjoint_solve(problem: &LinearControlProblem, v0: &WkVector) -> Result<Trajectory> {
    let basis = &problem.basis;
    basis.check(v0)?;
    if v0.order.get() != -1 {
        return Err(Error::OrderMismatch(format!(
            "adjoint datum must be tagged W^-1, got W^{}",
            v0.order.get()
        )));
    }
    let steps = problem.validate()?;
    let start = basis.expand(v0)?;
    Ok(problem.propagator()?.evolve(&start, steps))
}

/// `h(t) = Λ⁻¹(ψ v(t))` node by node, as a grid trajectory.
pub fn control_from_adjoint(
    basis: &SpectralBasis,
    v: &Trajectory,
    cutoff: &CutoffField,
) -> Result<Trajectory> {
    let mut fields = Vec::with_capacity(v.fields.len());
    for f in &v.fields {
        let pv = f.mul_real(&cutoff.values);
        let w = basis.project(&pv, SobolevOrder::new(-1)?)?;
        let h = basis.riesz_and_powers(&w, RieszPower::Inverse)?;
        fields.push(basis.expand(&h)?);
    }
    Ok(Trajectory { dt: v.dt, fields })
}

/// `S v₀` as a W¹ coefficient vector.
pub fn apply_s(problem: &LinearControlProblem, v0: &WkVector) -> Result<WkVector> {
    problem.basis.check(v0)?;
    let op = SOperator::new(problem)?;
    Ok(problem.basis.wrap(op.apply(&v0.coeffs), SobolevOrder::new(1)?))
}

/// `|⟨a, S b⟩ - conj⟨b, S a⟩|` for `a, b` normalized in W^{-1}.
pub fn s_symmetry_residual(op: &SOperator<'_>, a: &[C64], b: &[C64]) -> f64 {
    let basis = &op.problem.basis;
    let a: Vec<C64> = a.iter().map(|z| z / basis.norm_raw(a, -1.0)).collect();
    let b: Vec<C64> = b.iter().map(|z| z / basis.norm_raw(b, -1.0)).collect();
    let ab = inner_raw(&a, &op.apply(&b));
    let ba = inner_raw(&b, &op.apply(&a));
    (ab - ba.conj()).norm()
}

/// Result of [`solve_control`].
#[derive(Debug, Clone)]
pub struct ControlSolution {
    pub v0_opt: WkVector,
    /// the control `h` on the grid (the forcing is `ψ h`)
    pub h: Trajectory,
    /// controlled state from `u₀`
    pub u: Trajectory,
    /// `‖h‖_{L²(0,T;W¹)}`
    pub cost: f64,
    pub cg_iterations: usize,
    /// relative W¹ residual of the CG solve
    pub residual: f64,
    pub converged: bool,
    /// `‖P(u(T) - u_T)‖_{W¹}`
    pub target_error: f64,
    /// `target_error / ‖P u_T‖_{W¹}` (absolute when `u_T` projects to zero)
    pub relative_target_error: f64,
    /// energy norm of `(I - P)(u(T) - u_T)`, the part no span control reaches
    pub unresolved_tail: f64,
    pub path: SPath,
    pub forward_solves: usize,
    pub backward_solves: usize,
}

#[derive(Debug, Clone)]
struct CgOutcome {
    x: Vec<C64>,
    iterations: usize,
    residual: f64,
    converged: bool,
}

/// Preconditioned CG on `S c = b` in the W^{-1} geometry (preconditioner Λ).
fn conjugate_gradient(
    op: &SOperator<'_>,
    b: &[C64],
    tol: f64,
    max_iter: usize,
) -> CgOutcome {
    let lam = &op.problem.basis.eigenvalues;
    let n = b.len();
    let precond = |r: &[C64]| -> Vec<C64> { r.iter().zip(lam).map(|(z, l)| z * l).collect() };
    let b_norm = op.problem.basis.norm_raw(b, 1.0);
    let mut x = vec![ZERO; n];
    let mut r = b.to_vec();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = inner_raw(&r, &z).re;
    let mut best = (x.clone(), 1.0);
    for it in 1..=max_iter {
        let ap = op.apply(&p);
        let pap = inner_raw(&p, &ap).re;
        if pap <= 0.0 {
            // S is singular to working precision along p
            return CgOutcome {
                x: best.0,
                iterations: it,
                residual: best.1,
                converged: false,
            };
        }
        let step = rz / pap;
        for ((xi, ri), (pi, api)) in x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&ap)) {
            *xi += pi * step;
            *ri -= api * step;
        }
        z = precond(&r);
        let rz_new = inner_raw(&r, &z).re;
        let rel = rz_new.max(0.0).sqrt() / b_norm;
        if rel < best.1 {
            best = (x.clone(), rel);
        }
        if rel <= tol {
            return CgOutcome {
                x,
                iterations: it,
                residual: rel,
                converged: true,
            };
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + *pi * beta;
        }
    }
    CgOutcome {
        x: best.0,
        iterations: max_iter,
        residual: best.1,
        converged: false,
    }
}

/// Solve the linear control problem; on CG failure the best iterate comes
/// back inside [`Error::ControlNotConverged`].
pub fn solve_control(problem: &LinearControlProblem) -> Result<ControlSolution> {
    let op = SOperator::new(problem)?;
    solve_control_with(&op)
}

pub fn solve_control_with(op: &SOperator<'_>) -> Result<ControlSolution> {
    solve_control_for(op, &op.problem.u0, &op.problem.target)
}

/// Same operator, other endpoint data: `S` depends only on the cutoff, the
/// dynamics and the horizon, so scans over targets share one assembly.
pub fn solve_control_for(
    op: &SOperator<'_>,
    u0: &WaveField,
    target: &WaveField,
) -> Result<ControlSolution> {
    let problem = op.problem;
    let g = problem.basis.grid;
    if u0.grid != g || target.grid != g {
        return invalid("endpoint data grid differs from basis grid");
    }
    let basis = &problem.basis;
    let steps = op.steps;
    let cn = &op.cn;
    let mut scratch = Vec::new();

    // w₁: homogeneous backward solve from u_T
    let mut w1 = target.values.clone();
    for _ in 0..steps {
        cn.step_back(&mut w1, &mut scratch);
    }
    let i = C64::new(0.0, 1.0);
    let rhs_grid: Vec<C64> = u0
        .values
        .iter()
        .zip(&w1)
        .map(|(a, b)| -i * a + i * b)
        .collect();
    let b = basis.project_raw(&rhs_grid);
    let scale = basis.norm_raw(&basis.project_raw(&u0.values), 1.0)
        + basis.norm_raw(&basis.project_raw(&target.values), 1.0);
    let b_norm = basis.norm_raw(&b, 1.0);

    let outcome = if b_norm <= 1e-13 * scale || b_norm == 0.0 {
        // the free flow already reaches the target: zero control
        CgOutcome {
            x: vec![ZERO; b.len()],
            iterations: 0,
            residual: 0.0,
            converged: true,
        }
    } else {
        conjugate_gradient(op, &b, problem.cg_tol, problem.cg_max_iter)
    };

    let coeffs = op.control_coefficients(&outcome.x);
    let lam = &basis.eigenvalues;
    let cost_density: Vec<f64> = coeffs
        .iter()
        .map(|c| c.iter().zip(lam).map(|(z, l)| l * z.norm_sqr()).sum())
        .collect();
    let cost = trapezoid(&cost_density, problem.dt).sqrt();
    let grid = basis.grid;
    let h_fields: Vec<WaveField> = coeffs
        .par_iter()
        .map(|c| WaveField {
            grid,
            values: basis.expand_raw(c),
        })
        .collect();
    let psi = &problem.cutoff.values;
    let u = cn.evolve_forced_with(u0, steps, |n, buf| {
        for ((o, h), p) in buf.iter_mut().zip(&h_fields[n].values).zip(psi) {
            *o = h * p;
        }
    });
    let err = u.last().sub(target);
    let err_c = basis.project_raw(&err.values);
    let target_error = basis.norm_raw(&err_c, 1.0);
    let target_norm = basis.norm_raw(&basis.project_raw(&target.values), 1.0);
    let relative_target_error = if target_norm > 0.0 {
        target_error / target_norm
    } else {
        target_error
    };
    let resolved = basis.expand_raw(&err_c);
    let tail = WaveField {
        grid,
        values: err.values.iter().zip(&resolved).map(|(a, b)| a - b).collect(),
    };
    let unresolved_tail = tail.norm_energy(basis.potential());

    let solution = ControlSolution {
        v0_opt: basis.wrap(outcome.x, SobolevOrder::new(-1)?),
        h: Trajectory {
            dt: problem.dt,
            fields: h_fields,
        },
        u,
        cost,
        cg_iterations: outcome.iterations,
        residual: outcome.residual,
        converged: outcome.converged,
        target_error,
        relative_target_error,
        unresolved_tail,
        path: op.path,
        forward_solves: op.forward_solves(),
        backward_solves: op.backward_solves(),
    };
    if solution.converged {
        Ok(solution)
    } else {
        Err(Error::ControlNotConverged(Box::new(solution)))
    }
}

/// Smallest Ritz values of `Λ^{1/2} S Λ^{1/2}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservabilityEstimate {
    /// smallest Rayleigh quotient `⟨v₀, S v₀⟩ / ‖v₀‖²_{W^{-1}}`
    pub constant: f64,
    pub largest: f64,
    pub lanczos_steps: usize,
    pub ritz_values: Vec<f64>,
}

/// Lanczos with full reorthogonalization, `n_probe` steps at most.
pub fn estimate_observability(
    problem: &LinearControlProblem,
    n_probe: usize,
) -> Result<ObservabilityEstimate> {
    let op = SOperator::new(problem)?;
    estimate_observability_with(&op, n_probe)
}

pub fn estimate_observability_with(
    op: &SOperator<'_>,
    n_probe: usize,
) -> Result<ObservabilityEstimate> {
    let lam = &op.problem.basis.eigenvalues;
    let n = lam.len();
    let steps = n_probe.clamp(1, n);
    let root: Vec<f64> = lam.iter().map(|l| l.sqrt()).collect();
    let apply = |y: &[C64]| -> Vec<C64> {
        let c: Vec<C64> = y.iter().zip(&root).map(|(a, r)| a * r).collect();
        op.apply(&c).into_iter().zip(&root).map(|(a, r)| a * r).collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x0b5e_7ab1e);
    let mut q: Vec<C64> = (0..n)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    normalize(&mut q);
    let mut basis_vecs: Vec<Vec<C64>> = Vec::with_capacity(steps);
    let mut alpha = Vec::with_capacity(steps);
    let mut beta: Vec<f64> = Vec::with_capacity(steps);
    let mut scale = 0.0_f64;
    for _ in 0..steps {
        let mut w = apply(&q);
        let a = inner_raw(&q, &w).re;
        basis_vecs.push(q.clone());
        alpha.push(a);
        scale = scale.max(a.abs());
        // two passes of Gram-Schmidt against the whole Krylov basis
        for _ in 0..2 {
            for v in &basis_vecs {
                let c = inner_raw(v, &w);
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= c * vi;
                }
            }
        }
        let b = norm(&w);
        if b <= 1e-13 * scale.max(f64::MIN_POSITIVE) || basis_vecs.len() == steps {
            break;
        }
        beta.push(b);
        q = w.into_iter().map(|z| z / b).collect();
    }
    let k = alpha.len();
    let (ritz, _) = ql_eigen(&alpha, &beta[..k.saturating_sub(1)])?;
    Ok(ObservabilityEstimate {
        constant: ritz[0],
        largest: ritz[k - 1],
        lanczos_steps: k,
        ritz_values: ritz,
    })
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn normalize(v: &mut [C64]) {
    let s = norm(v);
    for z in v {
        *z /= s;
    }
}

/// Both sides of the integrated multiplier identity
/// `Im K(T) - Im K(0) = ∫₀ᵀ R(t) dt`, `K = ∫ q w̄ w_x`, for `i w_t = L w + G`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MultiplierCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs - rhs|` over the size of the terms involved
    pub residual: f64,
}

/// `w` solves `i w_t = (-∂² + α) w + G` with `G = forcing` (or `P(w)` when
/// `forcing` is `None`); `q` is the multiplier.
pub fn multiplier_identity_check(
    w: &Trajectory,
    q: &CutoffField,
    alpha: &PotentialField,
    forcing: Option<&Trajectory>,
) -> Result<MultiplierCheck> {
    if w.fields.is_empty() {
        return invalid("empty trajectory");
    }
    let grid = q.grid;
    let dx = grid.dx();
    let (q1, q2) = q.derivatives();
    let qv = &q.values;
    let mut k_im = Vec::with_capacity(w.fields.len());
    let mut density = Vec::with_capacity(w.fields.len());
    let mut magnitude = Vec::with_capacity(w.fields.len());
    for (n, f) in w.fields.iter().enumerate() {
        let g = match forcing {
            Some(tr) => tr.fields[n].values.clone(),
            None => apply_p_grid(alpha, f)?.values,
        };
        let wx = f.derivative_central();
        let mut k = ZERO;
        let mut terms = [0.0_f64; 5];
        for j in 0..f.len() {
            let (u, d, a, gj) = (f.values[j], wx[j], alpha.values[j], g[j]);
            let ubar_d = u.conj() * d;
            k += qv[j] * ubar_d;
            terms[0] += 2.0 * q1[j] * d.norm_sqr();
            terms[1] += q2[j] * ubar_d.re;
            terms[2] += 2.0 * qv[j] * a * ubar_d.re;
            terms[3] += q1[j] * a * u.norm_sqr();
            terms[4] += (2.0 * qv[j] * gj.conj() * d + q1[j] * u.conj() * gj).re;
        }
        k_im.push((k * dx).im);
        density.push(terms.iter().sum::<f64>() * dx);
        magnitude.push(terms.iter().map(|t| t.abs()).sum::<f64>() * dx);
    }
    let lhs = k_im[k_im.len() - 1] - k_im[0];
    let rhs = trapezoid(&density, w.dt);
    let size = trapezoid(&magnitude, w.dt).max(lhs.abs());
    let residual = if size > 0.0 {
        (lhs - rhs).abs() / size
    } else {
        0.0
    };
    Ok(MultiplierCheck {
        lhs,
        rhs,
        residual,
    })
}

/// Solution of `i w_t = L w + P(w)` by conjugation: `w = L_μ⁻¹ v` with
/// `i v_t = L v`, `v(0) = L_μ w₀`. Exact for the discrete operators.
pub fn conjugated_solution(
    alpha: &PotentialField,
    w0: &WaveField,
    dt: f64,
    steps: usize,
) -> Result<Trajectory> {
    let grid = alpha.grid;
    let mu = crate::domain::build_potential(&grid, &crate::domain::PotentialSpec::WeightMu)?;
    let l_mu = crate::spectral::DiscreteOperator::from_field(&mu)?;
    let v0 = WaveField::from_values(&grid, l_mu.apply(&w0.values))?;
    let v = CrankNicolson::from_potential(alpha, dt)?.evolve(&v0, steps);
    let fields = v
        .fields
        .iter()
        .map(|f| WaveField {
            grid,
            values: l_mu.solve(&f.values),
        })
        .collect();
    Ok(Trajectory { dt, fields })
}

/// The same equation by CN with the forcing `P(w)` treated by fixed-point
/// sweeps at each step.
pub fn evolve_with_p_forcing(
    alpha: &PotentialField,
    w0: &WaveField,
    dt: f64,
    steps: usize,
) -> Result<Trajectory> {
    let grid = alpha.grid;
    let cn = CrankNicolson::from_potential(alpha, dt)?;
    let mut fields = Vec::with_capacity(steps + 1);
    fields.push(w0.clone());
    let mut f_now = apply_p_grid(alpha, w0)?.values;
    let mut scratch = Vec::new();
    for _ in 0..steps {
        let prev = fields.last().expect("non-empty").values.clone();
        let mut guess = prev.clone();
        let mut f_next = f_now.clone();
        for _ in 0..50 {
            let mut u = prev.clone();
            cn.step_forced(&mut u, &f_now, &f_next, &mut scratch);
            let change: f64 = u.iter().zip(&guess).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
            let size: f64 = u.iter().map(|a| a.norm_sqr()).sum::<f64>();
            guess = u;
            f_next = apply_p_grid(alpha, &WaveField::from_values(&grid, guess.clone())?)?.values;
            if change <= 1e-28 * size.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        fields.push(WaveField::from_values(&grid, guess)?);
        f_now = f_next;
    }
    Ok(Trajectory { dt, fields })
}
