//! Time stepping for `i u_t = L u + f`: Crank-Nicolson, Strang split-step,
//! and the exact Avron-Herbst group of the constant electric field.

use crate::domain::{GridSpec, PotentialField, PotentialSpec};
use crate::error::{invalid, Error, Result};
use crate::field::{WaveField, C64};
use crate::spectral::DiscreteOperator;
use crate::tridiag::ComplexThomas;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Uniformly sampled fields `u(t_0) … u(t_M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub fields: Vec<WaveField>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.fields.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps() as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        self.dt * n as f64
    }

    pub fn first(&self) -> &WaveField {
        &self.fields[0]
    }

    pub fn last(&self) -> &WaveField {
        self.fields.last().expect("non-empty trajectory")
    }

    pub fn zeros(grid: &GridSpec, dt: f64, steps: usize) -> Self {
        Self {
            dt,
            fields: vec![WaveField::zeros(grid); steps + 1],
        }
    }

    /// `(∫₀ᵀ g(t)² dt)^{1/2}` by the trapezoid rule for a per-node norm `g`.
    pub fn l2_time_norm(&self, g: impl Fn(&WaveField) -> f64) -> f64 {
        let vals: Vec<f64> = self.fields.iter().map(|f| g(f).powi(2)).collect();
        trapezoid(&vals, self.dt).sqrt()
    }

    pub fn sup_norm(&self, g: impl Fn(&WaveField) -> f64) -> f64 {
        self.fields.iter().map(g).fold(0.0, f64::max)
    }
}

pub fn trapezoid(vals: &[f64], dt: f64) -> f64 {
    let m = vals.len();
    if m < 2 {
        return 0.0;
    }
    dt * (vals.iter().sum::<f64>() - 0.5 * (vals[0] + vals[m - 1]))
}

/// Number of steps for horizon `t` with step `dt`; `t` must be a multiple.
pub fn step_count(t: f64, dt: f64) -> Result<usize> {
    if !(t > 0.0 && dt > 0.0 && t.is_finite() && dt.is_finite()) {
        return invalid(format!("need T > 0 and dt > 0, got T={t}, dt={dt}"));
    }
    let m = (t / dt).round();
    if (m * dt - t).abs() > 1e-9 * t {
        return invalid(format!("T={t} is not a multiple of dt={dt}"));
    }
    Ok(m as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    CrankNicolson,
    SplitStep,
    AvronHerbst,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorSpec {
    pub scheme: Scheme,
    pub dt: f64,
    pub potential: PotentialField,
}

impl PropagatorSpec {
    pub fn new(scheme: Scheme, dt: f64, potential: PotentialField) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return invalid(format!("dt must be positive, got {dt}"));
        }
        if scheme == Scheme::AvronHerbst
            && !matches!(potential.spec, PotentialSpec::LinearField { .. })
        {
            return invalid("avron_herbst needs a linear_field potential");
        }
        Ok(Self {
            scheme,
            dt,
            potential,
        })
    }
}

/// Crank-Nicolson stepper with a prefactored Cayley factor
/// `U₁ = (I + iτL/2)^{-1}(I - iτL/2)`.
#[derive(Debug, Clone)]
pub struct CrankNicolson {
    pub op: DiscreteOperator,
    pub dt: f64,
    lhs: ComplexThomas,
}

impl CrankNicolson {
    pub fn new(op: &DiscreteOperator, dt: f64) -> Self {
        let half = C64::new(0.0, 0.5 * dt);
        let diag: Vec<C64> = op.matrix.diag.iter().map(|d| 1.0 + half * d).collect();
        let lhs = ComplexThomas::new(&diag, half * op.off_diagonal());
        Self {
            op: op.clone(),
            dt,
            lhs,
        }
    }

    pub fn from_potential(potential: &PotentialField, dt: f64) -> Result<Self> {
        Ok(Self::new(&DiscreteOperator::from_field(potential)?, dt))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.op.grid
    }

    fn half(&self) -> C64 {
        C64::new(0.0, 0.5 * self.dt)
    }

    /// `(I + s L) u` on the interior, `s` complex.
    fn apply_shifted(&self, u: &[C64], s: C64, out: &mut [C64]) {
        let d = &self.op.matrix.diag;
        let e = self.op.off_diagonal();
        let n = u.len();
        out[0] = C64::new(0.0, 0.0);
        out[n - 1] = C64::new(0.0, 0.0);
        for j in 1..n - 1 {
            let lu = d[j - 1] * u[j] + e * (u[j - 1] + u[j + 1]);
            out[j] = u[j] + s * lu;
        }
    }

    /// In place `u ← U₁ u`.
    pub fn step(&self, u: &mut [C64], scratch: &mut Vec<C64>) {
        scratch.resize(u.len(), C64::new(0.0, 0.0));
        self.apply_shifted(u, -self.half(), scratch);
        let n = u.len();
        self.lhs.solve(&mut scratch[1..n - 1]);
        u.copy_from_slice(scratch);
    }

    /// In place `u ← U₁^{-1} u`.
    pub fn step_back(&self, u: &mut [C64], scratch: &mut Vec<C64>) {
        scratch.resize(u.len(), C64::new(0.0, 0.0));
        self.apply_shifted(u, self.half(), scratch);
        let n = u.len();
        // (I - iτL/2) is the conjugate of the stored factorization
        for z in scratch[1..n - 1].iter_mut() {
            *z = z.conj();
        }
        self.lhs.solve(&mut scratch[1..n - 1]);
        for z in scratch.iter_mut() {
            *z = z.conj();
        }
        u.copy_from_slice(scratch);
    }

    /// One forced step `u ← U₁(u - iτ/2 f_now) - iτ/2 f_next`.
    pub fn step_forced(&self, u: &mut [C64], f_now: &[C64], f_next: &[C64], scratch: &mut Vec<C64>) {
        let h = self.half();
        for (a, f) in u.iter_mut().zip(f_now) {
            *a -= h * f;
        }
        self.step(u, scratch);
        for (a, f) in u.iter_mut().zip(f_next) {
            *a -= h * f;
        }
        clamp(u);
    }

    /// Exact inverse of [`Self::step_forced`]: given `u^{n+1}`, return `u^n`.
    pub fn step_forced_back(
        &self,
        u: &mut [C64],
        f_now: &[C64],
        f_next: &[C64],
        scratch: &mut Vec<C64>,
    ) {
        let h = self.half();
        for (a, f) in u.iter_mut().zip(f_next) {
            *a += h * f;
        }
        self.step_back(u, scratch);
        for (a, f) in u.iter_mut().zip(f_now) {
            *a += h * f;
        }
        clamp(u);
    }

    /// Homogeneous trajectory over `steps` steps.
    pub fn evolve(&self, u0: &WaveField, steps: usize) -> Trajectory {
        let mut fields = Vec::with_capacity(steps + 1);
        fields.push(u0.clone());
        let mut u = u0.values.clone();
        let mut scratch = Vec::new();
        for _ in 0..steps {
            self.step(&mut u, &mut scratch);
            fields.push(WaveField {
                grid: u0.grid,
                values: u.clone(),
            });
        }
        Trajectory {
            dt: self.dt,
            fields,
        }
    }

    /// Forced trajectory; `forcing(n, buf)` writes `f(t_n)` into `buf`.
    pub fn evolve_forced_with(
        &self,
        u0: &WaveField,
        steps: usize,
        mut forcing: impl FnMut(usize, &mut Vec<C64>),
    ) -> Trajectory {
        let n = u0.len();
        let mut fields = Vec::with_capacity(steps + 1);
        fields.push(u0.clone());
        let mut u = u0.values.clone();
        let mut scratch = Vec::new();
        let mut f_now = vec![C64::new(0.0, 0.0); n];
        let mut f_next = vec![C64::new(0.0, 0.0); n];
        forcing(0, &mut f_now);
        for k in 0..steps {
            forcing(k + 1, &mut f_next);
            self.step_forced(&mut u, &f_now, &f_next, &mut scratch);
            fields.push(WaveField {
                grid: u0.grid,
                values: u.clone(),
            });
            std::mem::swap(&mut f_now, &mut f_next);
        }
        Trajectory {
            dt: self.dt,
            fields,
        }
    }

    /// Backward forced solve from final data `w_end` at `t_M`.
    pub fn evolve_forced_back_with(
        &self,
        w_end: &WaveField,
        steps: usize,
        mut forcing: impl FnMut(usize, &mut Vec<C64>),
    ) -> Trajectory {
        let n = w_end.len();
        let mut fields = vec![WaveField::zeros(&w_end.grid); steps + 1];
        fields[steps] = w_end.clone();
        let mut w = w_end.values.clone();
        let mut scratch = Vec::new();
        let mut f_now = vec![C64::new(0.0, 0.0); n];
        let mut f_next = vec![C64::new(0.0, 0.0); n];
        forcing(steps, &mut f_next);
        for k in (0..steps).rev() {
            forcing(k, &mut f_now);
            self.step_forced_back(&mut w, &f_now, &f_next, &mut scratch);
            fields[k].values.copy_from_slice(&w);
            std::mem::swap(&mut f_now, &mut f_next);
        }
        Trajectory {
            dt: self.dt,
            fields,
        }
    }
}

fn clamp(u: &mut [C64]) {
    let n = u.len();
    u[0] = C64::new(0.0, 0.0);
    u[n - 1] = C64::new(0.0, 0.0);
}

/// Homogeneous evolution of `u0` over `[0, T]`.
pub fn evolve(u0: &WaveField, horizon: f64, spec: &PropagatorSpec) -> Result<Trajectory> {
    let steps = step_count(horizon, spec.dt)?;
    if u0.grid != spec.potential.grid {
        return invalid("initial field and potential live on different grids");
    }
    match spec.scheme {
        Scheme::CrankNicolson => Ok(CrankNicolson::from_potential(&spec.potential, spec.dt)?.evolve(u0, steps)),
        Scheme::SplitStep => Ok(SplitStep::new(&spec.potential, spec.dt)?.evolve(u0, steps)),
        Scheme::AvronHerbst => {
            let slope = match spec.potential.spec {
                PotentialSpec::LinearField { slope } => slope,
                _ => unreachable!("checked in PropagatorSpec::new"),
            };
            let ah = AvronHerbst::new(&u0.grid, -slope);
            let mut fields = Vec::with_capacity(steps + 1);
            for k in 0..=steps {
                fields.push(ah.apply(u0, spec.dt * k as f64)?);
            }
            Ok(Trajectory {
                dt: spec.dt,
                fields,
            })
        }
    }
}

/// Forced evolution `i u_t = L u + f`, `f` sampled on the same time mesh.
pub fn evolve_inhomogeneous(
    u0: &WaveField,
    horizon: f64,
    forcing: &Trajectory,
    spec: &PropagatorSpec,
) -> Result<Trajectory> {
    let steps = step_count(horizon, spec.dt)?;
    if forcing.fields.len() != steps + 1 || (forcing.dt - spec.dt).abs() > 1e-12 * spec.dt {
        return invalid(format!(
            "forcing mesh ({} samples, dt={}) does not match {} steps of dt={}",
            forcing.fields.len(),
            forcing.dt,
            steps,
            spec.dt
        ));
    }
    if spec.scheme != Scheme::CrankNicolson {
        return invalid("forced evolution is implemented for crank_nicolson only");
    }
    let cn = CrankNicolson::from_potential(&spec.potential, spec.dt)?;
    Ok(cn.evolve_forced_with(u0, steps, |k, buf| {
        buf.copy_from_slice(&forcing.fields[k].values)
    }))
}

/// DST-I on complex data through an FFT of length `2(m+1)`.
struct SineTransform {
    m: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl SineTransform {
    fn new(m: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            m,
            fft: planner.plan_fft_forward(2 * (m + 1)),
        }
    }

    /// `X_k = Σ_j x_j sin(π j k/(m+1))`, `j,k = 1..m` (0-based slices).
    fn apply(&self, x: &mut [C64], buf: &mut Vec<C64>) {
        let m = self.m;
        buf.clear();
        buf.resize(2 * (m + 1), C64::new(0.0, 0.0));
        for j in 0..m {
            buf[j + 1] = x[j];
            buf[2 * (m + 1) - 1 - j] = -x[j];
        }
        self.fft.process(buf);
        let i_half = C64::new(0.0, 0.5);
        for k in 0..m {
            x[k] = i_half * buf[k + 1];
        }
    }
}

/// Strang splitting `e^{-iτV/2} e^{-iτK} e^{-iτV/2}` with `K = -D²` diagonalized
/// by the discrete sine transform (same eigenvalues as the CN operator).
pub struct SplitStep {
    grid: GridSpec,
    dt: f64,
    potential: Vec<f64>,
    kinetic_phase: Vec<C64>,
    dst: SineTransform,
}

impl SplitStep {
    pub fn new(potential: &PotentialField, dt: f64) -> Result<Self> {
        let grid = potential.grid;
        let m = grid.n_points() - 2;
        let dx = grid.dx();
        let norm = 2.0 / (m + 1) as f64;
        let kinetic_phase = (1..=m)
            .map(|k| {
                let s = (k as f64 * std::f64::consts::PI / (2.0 * (m + 1) as f64)).sin();
                let lam = 4.0 / (dx * dx) * s * s;
                C64::from_polar(norm, -lam * dt)
            })
            .collect();
        Ok(Self {
            grid,
            dt,
            potential: potential.values.clone(),
            kinetic_phase,
            dst: SineTransform::new(m),
        })
    }

    pub fn step(&self, u: &mut [C64], buf: &mut Vec<C64>) {
        let n = u.len();
        for (z, v) in u.iter_mut().zip(&self.potential) {
            *z *= C64::from_polar(1.0, -0.5 * self.dt * v);
        }
        let inner = &mut u[1..n - 1];
        self.dst.apply(inner, buf);
        for (z, p) in inner.iter_mut().zip(&self.kinetic_phase) {
            *z *= p;
        }
        self.dst.apply(inner, buf);
        for (z, v) in u.iter_mut().zip(&self.potential) {
            *z *= C64::from_polar(1.0, -0.5 * self.dt * v);
        }
        clamp(u);
    }

    pub fn evolve(&self, u0: &WaveField, steps: usize) -> Trajectory {
        let mut fields = Vec::with_capacity(steps + 1);
        fields.push(u0.clone());
        let mut u = u0.values.clone();
        let mut buf = Vec::new();
        for _ in 0..steps {
            self.step(&mut u, &mut buf);
            fields.push(WaveField {
                grid: self.grid,
                values: u.clone(),
            });
        }
        Trajectory {
            dt: self.dt,
            fields,
        }
    }
}

/// Default fraction of the mass tolerated in the outer 10% of the box.
pub const EDGE_TOLERANCE: f64 = 1e-12;

/// Periodic spectral tools on the first `n-1` nodes of a grid (period `2X`).
pub struct PeriodicFft {
    len: usize,
    period: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl PeriodicFft {
    pub fn new(grid: &GridSpec) -> Self {
        let len = grid.n_points() - 1;
        let mut planner = FftPlanner::new();
        Self {
            len,
            period: 2.0 * grid.half_width(),
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn wavenumber(&self, m: usize) -> f64 {
        let mm = if m <= self.len / 2 {
            m as f64
        } else {
            m as f64 - self.len as f64
        };
        2.0 * std::f64::consts::PI * mm / self.period
    }

    /// Apply a Fourier multiplier `σ(k)` to grid values (last node mirrors the first).
    pub fn multiplier(&self, values: &[C64], symbol: impl Fn(f64) -> C64) -> Vec<C64> {
        let mut buf = values[..self.len].to_vec();
        self.forward.process(&mut buf);
        let scale = 1.0 / self.len as f64;
        for (m, z) in buf.iter_mut().enumerate() {
            *z *= symbol(self.wavenumber(m)) * scale;
        }
        self.inverse.process(&mut buf);
        let first = buf[0];
        buf.push(first);
        buf
    }

    pub fn derivative(&self, values: &[C64]) -> Vec<C64> {
        let nyq = self.len.is_multiple_of(2);
        let kmax = self.wavenumber(self.len / 2);
        self.multiplier(values, |k| {
            if nyq && k == kmax {
                C64::new(0.0, 0.0)
            } else {
                C64::new(0.0, k)
            }
        })
    }
}

/// `U_e(t) = e^{-iE²t³/3} e^{iEtx} e^{-i(p²t + E t² p)}`, the group generated
/// by `-∂² - E x`, evaluated spectrally on the periodic box.
pub struct AvronHerbst {
    grid: GridSpec,
    field_strength: f64,
    edge_tolerance: f64,
    fft: PeriodicFft,
}

impl AvronHerbst {
    pub fn new(grid: &GridSpec, field_strength: f64) -> Self {
        Self {
            grid: *grid,
            field_strength,
            edge_tolerance: EDGE_TOLERANCE,
            fft: PeriodicFft::new(grid),
        }
    }

    pub fn with_edge_tolerance(mut self, tol: f64) -> Self {
        self.edge_tolerance = tol;
        self
    }

    pub fn fft(&self) -> &PeriodicFft {
        &self.fft
    }

    /// Fraction of `|u|²` in the outer tenth of the box on either side.
    pub fn edge_fraction(&self, u: &[C64]) -> f64 {
        let x_in = 0.8 * self.grid.half_width();
        let mut edge = 0.0;
        let mut total = 0.0;
        for (j, z) in u.iter().enumerate() {
            let w = z.norm_sqr();
            total += w;
            if self.grid.x(j).abs() >= x_in {
                edge += w;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            edge / total
        }
    }

    /// `U_e(t) u` without the edge check.
    pub fn apply_unchecked(&self, u: &WaveField, t: f64) -> WaveField {
        let e = self.field_strength;
        let mut v = self
            .fft
            .multiplier(&u.values, |k| C64::from_polar(1.0, -(k * k * t + e * t * t * k)));
        let phase0 = -e * e * t * t * t / 3.0;
        for (j, z) in v.iter_mut().enumerate() {
            *z *= C64::from_polar(1.0, e * t * self.grid.x(j) + phase0);
        }
        let n = v.len();
        v[n - 1] = v[0];
        WaveField {
            grid: self.grid,
            values: v,
        }
    }

    pub fn apply(&self, u: &WaveField, t: f64) -> Result<WaveField> {
        if u.grid != self.grid {
            return invalid("field grid differs from propagator grid");
        }
        let out = self.apply_unchecked(u, t);
        let edge = self.edge_fraction(&out.values).max(self.edge_fraction(&u.values));
        if edge > self.edge_tolerance {
            return Err(Error::SupportOverflow {
                edge_mass: edge,
                tolerance: self.edge_tolerance,
            });
        }
        Ok(out)
    }
}

/// `U_e(t) u` for the unit field `L_e = -∂² - x`.
pub fn avron_herbst_apply(u: &WaveField, t: f64) -> Result<WaveField> {
    AvronHerbst::new(&u.grid, 1.0).apply(u, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::build_potential;
    use crate::spectral::assemble_and_decompose;

    fn mu_setup(dx: f64) -> (GridSpec, PotentialField) {
        let g = GridSpec::with_spacing(20.0, dx).unwrap();
        let p = build_potential(&g, &PotentialSpec::WeightMu).unwrap();
        (g, p)
    }

    #[test]
    fn cn_is_unitary_and_invertible() {
        let (g, p) = mu_setup(0.05);
        let cn = CrankNicolson::from_potential(&p, 1e-3).unwrap();
        let u0 = WaveField::gaussian(&g, 1.0, 1.0, 0.7, 2.0);
        let m0 = u0.norm_l2();
        let mut u = u0.values.clone();
        let mut s = Vec::new();
        for _ in 0..1000 {
            cn.step(&mut u, &mut s);
        }
        let m1 = WaveField::from_values(&g, u.clone()).unwrap().norm_l2();
        assert!((m1 / m0 - 1.0).abs() < 1e-12);
        for _ in 0..1000 {
            cn.step_back(&mut u, &mut s);
        }
        let back = WaveField::from_values(&g, u).unwrap();
        assert!(back.sub(&u0).norm_l2() < 1e-11);
    }

    #[test]
    fn stationary_phase_of_box_mode() {
        let g = GridSpec::with_spacing(5.0, 0.05).unwrap();
        let p = build_potential(&g, &PotentialSpec::LinearField { slope: 0.0 }).unwrap();
        let (_, b) = assemble_and_decompose(&g, &p, 3).unwrap();
        let u0 = b.mode_field(2);
        let lam = b.eigenvalues[2];
        let spec = PropagatorSpec::new(Scheme::CrankNicolson, 1e-3, p).unwrap();
        let tr = evolve(&u0, 1.0, &spec).unwrap();
        let exact = u0.scaled(C64::from_polar(1.0, -lam));
        let err = tr.last().sub(&exact).norm_l2();
        // CN phase error τ²λ³T/12
        let predicted = 1e-6 * lam.powi(3) / 12.0;
        println!("phase error {err:.3e}, predicted {predicted:.3e}");
        assert!(err < 2.0 * predicted);
    }

    #[test]
    fn forward_and_backward_forced_solves_are_inverse() {
        let (g, p) = mu_setup(0.05);
        let cn = CrankNicolson::from_potential(&p, 2e-3).unwrap();
        let u0 = WaveField::gaussian(&g, 1.0, 0.0, 1.0, 0.0);
        let f = |k: usize, buf: &mut Vec<C64>| {
            let t = 2e-3 * k as f64;
            for (j, z) in buf.iter_mut().enumerate() {
                let x = g.x(j);
                *z = C64::new((-(x - 1.0).powi(2)).exp() * t.cos(), 0.3 * (-(x * x)).exp());
            }
        };
        let fwd = cn.evolve_forced_with(&u0, 200, f);
        let back = cn.evolve_forced_back_with(fwd.last(), 200, f);
        assert!(back.first().sub(&u0).norm_l2() < 1e-12);
    }

    #[test]
    fn resonant_forcing_matches_duhamel() {
        // f(s) = e^{-iLs} g  ⇒  u(T) = -iT e^{-iLT} g  for u0 = 0
        let (g, p) = mu_setup(0.1);
        let spec = PropagatorSpec::new(Scheme::CrankNicolson, 1e-3, p.clone()).unwrap();
        let g0 = WaveField::gaussian(&g, 1.0, 0.5, 0.8, 0.0);
        let free = evolve(&g0, 1.0, &spec).unwrap();
        let zero = WaveField::zeros(&g);
        let u = evolve_inhomogeneous(&zero, 1.0, &free, &spec).unwrap();
        let want = free.last().scaled(C64::new(0.0, -1.0));
        let err = u.last().sub(&want).norm_l2() / want.norm_l2();
        println!("resonant Duhamel error {err:.3e}");
        assert!(err < 1e-10);
        // f = 0 reproduces evolve
        let z = Trajectory::zeros(&g, 1e-3, 1000);
        let h = evolve_inhomogeneous(&g0, 1.0, &z, &spec).unwrap();
        assert_eq!(h.last(), free.last());
        assert!(evolve_inhomogeneous(&g0, 1.0, &Trajectory::zeros(&g, 1e-3, 999), &spec).is_err());
    }

    #[test]
    fn split_step_agrees_with_cn_to_second_order() {
        let (g, p) = mu_setup(0.05);
        let u0 = WaveField::gaussian(&g, 1.0, 0.5, 1.0, 1.0);
        let errs: Vec<f64> = [4e-3, 2e-3]
            .iter()
            .map(|&dt| {
                let cn = CrankNicolson::from_potential(&p, dt).unwrap();
                let ss = SplitStep::new(&p, dt).unwrap();
                let steps = (1.0 / dt).round() as usize;
                let a = cn.evolve(&u0, steps);
                let b = ss.evolve(&u0, steps);
                a.last().sub(b.last()).norm_l2()
            })
            .collect();
        println!("cn vs split-step: {errs:?}");
        assert!(errs[0] < 1e-2);
        let ratio = errs[0] / errs[1];
        assert!(ratio > 3.2 && ratio < 4.8);
    }

    #[test]
    fn avron_herbst_generator_and_group() {
        let g = GridSpec::with_spacing(40.0, 0.05).unwrap();
        let u = WaveField::gaussian(&g, 1.0, -2.0, 1.0, 0.5);
        let ah = AvronHerbst::new(&g, 1.0);
        // d/dt U(t)u at 0 equals -i(-u'' - x u)
        let h = 1e-4;
        let plus = ah.apply(&u, h).unwrap();
        let minus = ah.apply(&u, -h).unwrap();
        let fft = ah.fft();
        let uxx = fft.derivative(&fft.derivative(&u.values));
        let mut worst = 0.0_f64;
        for j in 0..g.n_points() {
            let deriv = (plus.values[j] - minus.values[j]) / (2.0 * h);
            let gen = C64::new(0.0, -1.0) * (-uxx[j] - g.x(j) * u.values[j]);
            worst = worst.max((deriv - gen).norm());
        }
        println!("generator defect {worst:.3e}");
        assert!(worst < 1e-6);
        for &(s, t) in &[(0.7, 1.1), (-1.5, 2.0), (2.0, -0.4)] {
            let a = ah.apply(&ah.apply(&u, t).unwrap(), s).unwrap();
            let b = ah.apply(&u, s + t).unwrap();
            assert!(a.sub(&b).norm_l2() < 1e-8, "s={s} t={t}");
        }
        assert!((ah.apply(&u, 1.3).unwrap().norm_l2() - u.norm_l2()).abs() < 1e-12);
        assert!(ah.apply(&u, 0.0).unwrap().sub(&u).norm_l2() < 1e-14);
        // t = 6 moves the packet by 36 units: past the box edge
        assert!(matches!(ah.apply(&u, 6.0), Err(Error::SupportOverflow { .. })));
    }
}
