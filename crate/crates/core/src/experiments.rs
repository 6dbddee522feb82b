//! Numerical signatures of the two obstructions to interior control: the
//! cost of steering to high eigenmodes with an interior cutoff, and the
//! concentration family `Ψ_ε` pushed through the electric-field group.

use crate::domain::{build_cutoff, build_potential, weight_mu, CutoffKind, GridSpec};
use crate::error::{invalid, Error, Result};
use crate::field::{WaveField, C64};
use crate::hum::{
    estimate_observability_with, solve_control_for, ControlSolution, LinearControlProblem,
    ObservabilityEstimate, SOperator,
};
use crate::propagate::AvronHerbst;
use crate::spectral::{metric_basis, MetricOperator};
use crate::stats::loglog_slope;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Inputs of [`discrete_cost_scan`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostScanSpec {
    pub half_width: f64,
    pub dx: f64,
    pub metric: MetricOperator,
    pub n_modes: usize,
    pub horizon: f64,
    pub dt: f64,
    pub interior_radius: f64,
    /// radius of the exterior cutoff used for the contrast run
    pub exterior_radius: f64,
    /// mode indices (0-based) used as targets
    pub targets: Vec<usize>,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub n_probe: usize,
}

impl Default for CostScanSpec {
    fn default() -> Self {
        Self {
            half_width: 10.0,
            dx: 0.05,
            metric: MetricOperator::Weight,
            n_modes: 64,
            horizon: 1.0,
            dt: 2e-3,
            interior_radius: 2.0,
            exterior_radius: 1.0,
            targets: (2..=8).collect(),
            cg_tol: 1e-10,
            cg_max_iter: 400,
            n_probe: 48,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRow {
    pub n: usize,
    pub lambda: f64,
    /// `‖h‖_{L²(0,T;W¹)}`, best CG iterate when the solve fails
    pub cost: f64,
    pub cg_iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// `λ^{-1}(‖u₀‖_H + λ^{1/2})(1 + λ^{1/4})` at `u₀ = 0`
    pub bound_quantity: f64,
    pub exterior_cost: f64,
    pub exterior_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostScanResult {
    pub rows: Vec<CostRow>,
    pub interior_observability: ObservabilityEstimate,
    pub exterior_observability: ObservabilityEstimate,
    /// fitted exponent of cost against `λ` (interior)
    pub cost_exponent: f64,
    pub bound_exponent: f64,
    /// first scanned `N` from which the interior cost never decreases
    pub monotone_from: Option<usize>,
}

impl CostScanResult {
    pub fn exterior_spread(&self) -> f64 {
        let (lo, hi) = self.rows.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), r| {
            (lo.min(r.exterior_cost), hi.max(r.exterior_cost))
        });
        hi / lo
    }

    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged && r.exterior_converged)
    }
}

fn cost_of(result: Result<ControlSolution>) -> Result<ControlSolution> {
    match result {
        Ok(s) => Ok(s),
        Err(Error::ControlNotConverged(best)) => Ok(*best),
        Err(e) => Err(e),
    }
}

/// Control `0 → φ_N` for each target with an interior and an exterior cutoff.
/// CG failures are data: the best iterate's cost is recorded.
pub fn discrete_cost_scan(spec: &CostScanSpec) -> Result<CostScanResult> {
    if spec.targets.is_empty() {
        return invalid("cost scan needs at least one target");
    }
    let grid = GridSpec::with_spacing(spec.half_width, spec.dx)?;
    let mut targets = spec.targets.clone();
    targets.sort_unstable();
    targets.dedup();
    if let Some(&n) = targets.last() {
        if n >= spec.n_modes {
            return invalid(format!("target {n} outside the {} basis modes", spec.n_modes));
        }
    }
    let (_, basis) = metric_basis(&grid, spec.metric, spec.n_modes)?;
    let basis = Arc::new(basis);
    let potential = build_potential(&grid, &crate::domain::PotentialSpec::WeightMu)?;
    let make = |kind, radius| -> Result<LinearControlProblem> {
        Ok(LinearControlProblem {
            u0: WaveField::zeros(&grid),
            target: WaveField::zeros(&grid),
            horizon: spec.horizon,
            cutoff: build_cutoff(&grid, kind, radius)?,
            potential: potential.clone(),
            dt: spec.dt,
            basis: basis.clone(),
            cg_tol: spec.cg_tol,
            cg_max_iter: spec.cg_max_iter,
        })
    };
    let interior = make(CutoffKind::Interior, spec.interior_radius)?;
    let exterior = make(CutoffKind::Exterior, spec.exterior_radius)?;
    let (int_op, ext_op) = rayon::join(|| SOperator::new(&interior), || SOperator::new(&exterior));
    let (int_op, ext_op) = (int_op?, ext_op?);
    let zero = WaveField::zeros(&grid);
    let mut rows = Vec::with_capacity(targets.len());
    for &n in &targets {
        let target = basis.mode_field(n);
        let lambda = basis.eigenvalues[n];
        let a = cost_of(solve_control_for(&int_op, &zero, &target))?;
        let b = cost_of(solve_control_for(&ext_op, &zero, &target))?;
        rows.push(CostRow {
            n,
            lambda,
            cost: a.cost,
            cg_iterations: a.cg_iterations,
            residual: a.residual,
            converged: a.converged,
            bound_quantity: bound_quantity(lambda, 0.0),
            exterior_cost: b.cost,
            exterior_converged: b.converged,
        });
    }
    let interior_observability = estimate_observability_with(&int_op, spec.n_probe)?;
    let exterior_observability = estimate_observability_with(&ext_op, spec.n_probe)?;
    let lams: Vec<f64> = rows.iter().map(|r| r.lambda).collect();
    let costs: Vec<f64> = rows.iter().map(|r| r.cost).collect();
    let bounds: Vec<f64> = rows.iter().map(|r| r.bound_quantity).collect();
    let monotone_from = (0..rows.len())
        .find(|&i| rows[i..].windows(2).all(|w| w[1].cost >= w[0].cost))
        .map(|i| rows[i].n);
    Ok(CostScanResult {
        cost_exponent: if rows.len() > 1 { loglog_slope(&lams, &costs) } else { f64::NAN },
        bound_exponent: if rows.len() > 1 { loglog_slope(&lams, &bounds) } else { f64::NAN },
        rows,
        interior_observability,
        exterior_observability,
        monotone_from,
    })
}

/// `λ^{-1}(u + λ^{1/2})(1 + λ^{1/4})`, which decays like `λ^{-1/4}`.
pub fn bound_quantity(lambda: f64, u0_norm: f64) -> f64 {
    (u0_norm + lambda.sqrt()) * (1.0 + lambda.powf(0.25)) / lambda
}

/// Profile of the concentrating family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BumpProfile {
    /// `exp(-1/(1-x²))` on `(-1, 1)`, normalized to unit mass
    #[default]
    Mollifier,
    /// `cos⁴(πx/2)` on `[-1, 1]`, normalized; only C³ but handy as a contrast
    CosinePower,
}

impl BumpProfile {
    /// Unnormalized profile and derivative.
    fn raw(self, s: f64) -> (f64, f64) {
        if s.abs() >= 1.0 {
            return (0.0, 0.0);
        }
        match self {
            BumpProfile::Mollifier => {
                let d = 1.0 - s * s;
                let v = (-1.0 / d).exp();
                (v, v * (-2.0 * s / (d * d)))
            }
            BumpProfile::CosinePower => {
                let a = 0.5 * PI * s;
                let c = a.cos();
                (c.powi(4), -4.0 * c.powi(3) * a.sin() * 0.5 * PI)
            }
        }
    }
}

/// Reference norms of the unit-scale profile `Ψ` (unit mass).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileConstants {
    /// `∫` of the unnormalized profile
    pub mass: f64,
    pub l2: f64,
    pub dx_l1: f64,
    pub dx_l2: f64,
}

const REFERENCE_NODES: usize = 200_000;

impl ProfileConstants {
    /// Trapezoid sums on a very fine grid; the profile vanishes to all
    /// orders at `±1`, so the sums converge spectrally.
    pub fn of(profile: BumpProfile) -> Self {
        let h = 2.0 / REFERENCE_NODES as f64;
        let (mut m, mut l2, mut d2) = (0.0, 0.0, 0.0);
        for j in 1..REFERENCE_NODES {
            let (v, dv) = profile.raw(-1.0 + j as f64 * h);
            m += v;
            l2 += v * v;
            d2 += dv * dv;
        }
        let mass = m * h;
        let peak = profile.raw(0.0).0;
        Self {
            mass,
            l2: (l2 * h).sqrt() / mass,
            dx_l1: 2.0 * peak / mass,
            dx_l2: (d2 * h).sqrt() / mass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingSpec {
    pub eps: Vec<f64>,
    pub horizon: f64,
    pub profile: BumpProfile,
    /// nodes per `ε_min`
    pub resolution: usize,
}

impl Default for ScalingSpec {
    fn default() -> Self {
        Self {
            eps: vec![0.1, 0.05, 0.025],
            horizon: 1.0,
            profile: BumpProfile::Mollifier,
            resolution: 80,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub eps: f64,
    pub l1: f64,
    pub l2: f64,
    pub l2_mu: f64,
    pub dx_l1: f64,
    pub dx_l2: f64,
    /// `ε³⟨φ_ε, L₊ φ_ε⟩`
    pub energy_scaled: f64,
    /// `|ε³⟨φ_ε, L₊ φ_ε⟩ - ‖Ψ_x‖²|`
    pub remainder: f64,
    /// relative defects of the five scaling laws; the weighted one is an
    /// inequality and reports only its excess
    pub identity_errors: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingScanResult {
    pub rows: Vec<ScalingRow>,
    pub reference: ProfileConstants,
    pub remainder_slope: f64,
    pub max_identity_error: f64,
}

/// Norms of `Ψ_ε` and the scaled energy of `φ_ε = U_e(2T)Ψ_ε` for each `ε`.
pub fn scaling_family_check(spec: &ScalingSpec) -> Result<ScalingScanResult> {
    if spec.eps.is_empty() || spec.eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return invalid("eps values must lie in (0, 1)");
    }
    if spec.horizon.is_nan() || spec.horizon <= 0.0 || spec.resolution < 20 {
        return invalid("horizon must be positive and resolution at least 20");
    }
    let reference = ProfileConstants::of(spec.profile);
    let eps_min = spec.eps.iter().cloned().fold(f64::INFINITY, f64::min);
    let dz = eps_min / spec.resolution as f64;
    let mut eps = spec.eps.clone();
    eps.sort_by(|a, b| b.total_cmp(a));
    let rows = eps
        .iter()
        .map(|&e| scaling_row(spec.profile, &reference, e, spec.horizon, dz))
        .collect::<Vec<_>>();
    let xs: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.remainder).collect();
    let max_identity_error = rows
        .iter()
        .flat_map(|r| r.identity_errors)
        .fold(0.0, f64::max);
    Ok(ScalingScanResult {
        remainder_slope: if rows.len() > 1 { loglog_slope(&xs, &ys) } else { f64::NAN },
        rows,
        reference,
        max_identity_error,
    })
}

fn scaling_row(
    profile: BumpProfile,
    reference: &ProfileConstants,
    eps: f64,
    horizon: f64,
    dz: f64,
) -> ScalingRow {
    let half = (eps / dz).ceil() as i64;
    let nodes: Vec<f64> = (-half..=half).map(|j| j as f64 * dz).collect();
    let scale = 1.0 / (eps * reference.mass);
    let samples: Vec<(f64, f64)> = nodes
        .iter()
        .map(|&z| {
            let (v, dv) = profile.raw(z / eps);
            (v * scale, dv * scale / eps)
        })
        .collect();
    let l1 = dz * samples.iter().map(|s| s.0.abs()).sum::<f64>();
    let l2 = (dz * samples.iter().map(|s| s.0 * s.0).sum::<f64>()).sqrt();
    let l2_mu = (dz
        * samples
            .iter()
            .zip(&nodes)
            .map(|(s, &z)| weight_mu(z) * s.0 * s.0)
            .sum::<f64>())
    .sqrt();
    // total variation: exact for a unimodal profile sampled at its peak
    let dx_l1: f64 = samples.windows(2).map(|w| (w[1].0 - w[0].0).abs()).sum();
    let dx_l2 = (dz * samples.iter().map(|s| s.1 * s.1).sum::<f64>()).sqrt();

    let t = 2.0 * horizon;
    let kinetic = dx_l2 * dx_l2 + t * t * l2 * l2;
    let moment = abs_moment(&nodes, &samples, t, dz);
    let energy_scaled = eps.powi(3) * (kinetic + moment);
    let remainder = (energy_scaled - reference.dx_l2.powi(2)).abs();

    let rel = |got: f64, want: f64| (got - want).abs() / want;
    let mu_bound = eps.powf(-0.5) * (1.0 + eps).sqrt() * reference.l2;
    ScalingRow {
        eps,
        l1,
        l2,
        l2_mu,
        dx_l1,
        dx_l2,
        energy_scaled,
        remainder,
        identity_errors: [
            rel(l1, 1.0),
            rel(l2 * eps.sqrt(), reference.l2),
            ((l2_mu - mu_bound) / mu_bound).max(0.0),
            rel(dx_l1 * eps, reference.dx_l1),
            rel(dx_l2 * eps.powf(1.5), reference.dx_l2),
        ],
    }
}

/// `∫|x||U_e(t)Ψ|² dx` from the far-field form of the free flow:
/// `|U_e(t)Ψ(x)|² = |ĝ((x-t²)/2t)|²/(4πt)` with `g(z) = e^{iz²/4t}Ψ(z)`.
fn abs_moment(nodes: &[f64], samples: &[(f64, f64)], t: f64, dz: f64) -> f64 {
    // frequency spacing 2π/(L dz) well below the scale of ĝ and of the kink at ξ = -t/2
    let len = ((2.0 * PI / (0.01 * dz)).ceil() as usize)
        .max(8 * nodes.len())
        .next_power_of_two();
    let mut buf = vec![C64::new(0.0, 0.0); len];
    for (slot, (&z, s)) in buf.iter_mut().zip(nodes.iter().zip(samples)) {
        *slot = C64::from_polar(s.0, z * z / (4.0 * t));
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let dxi = 2.0 * PI / (len as f64 * dz);
    let total: f64 = buf
        .iter()
        .enumerate()
        .map(|(m, g)| {
            let k = if m <= len / 2 { m as f64 } else { m as f64 - len as f64 };
            let xi = k * dxi;
            (t * t + 2.0 * t * xi).abs() * g.norm_sqr() * dz * dz
        })
        .sum();
    total * dxi / (2.0 * PI)
}

/// `ε³⟨φ_ε, L₊φ_ε⟩` by direct application of the group on `grid` (spectral
/// kinetic term). Only practical for moderate `ε`; used as a cross-check.
pub fn scaled_energy_direct(
    grid: &GridSpec,
    profile: BumpProfile,
    eps: f64,
    horizon: f64,
    edge_tolerance: f64,
) -> Result<f64> {
    let reference = ProfileConstants::of(profile);
    let scale = 1.0 / (eps * reference.mass);
    let psi = WaveField::from_fn(grid, |x| C64::new(profile.raw(x / eps).0 * scale, 0.0));
    let ah = AvronHerbst::new(grid, 1.0).with_edge_tolerance(edge_tolerance);
    let phi = ah.apply(&psi, 2.0 * horizon)?;
    let dphi = WaveField::from_values(grid, ah.fft().derivative(&phi.values))?;
    let abs: Vec<f64> = grid.points().iter().map(|x| x.abs()).collect();
    Ok(eps.powi(3) * (dphi.norm_l2().powi(2) + phi.norm_weighted(&abs).powi(2)))
}

/// Relative residuals of `U(r)(-∂²)U(s) = r²U(r+s) + i(r-s)∂U(r+s) - ∂U(r+s)∂`
/// and of the same identity with real coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AvronIdentityResidual {
    pub r: f64,
    pub s: f64,
    pub unitary_form: f64,
    pub literal_form: f64,
}

/// Largest relative L² residual over `fields`.
pub fn avron_identity_check(r: f64, s: f64, fields: &[WaveField]) -> Result<AvronIdentityResidual> {
    let mut out = AvronIdentityResidual {
        r,
        s,
        unitary_form: 0.0,
        literal_form: 0.0,
    };
    for phi in fields {
        let ah = AvronHerbst::new(&phi.grid, 1.0);
        let fft = ah.fft();
        let us = ah.apply(phi, s)?;
        let lap = WaveField::from_values(&phi.grid, fft.multiplier(&us.values, |k| C64::new(k * k, 0.0)))?;
        let lhs = ah.apply(&lap, r)?;
        let u = ah.apply(phi, r + s)?;
        let du = fft.derivative(&u.values);
        let dphi = WaveField::from_values(&phi.grid, fft.derivative(&phi.values))?;
        let du_d = fft.derivative(&ah.apply_unchecked(&dphi, r + s).values);
        let size = lhs.norm_l2();
        if size == 0.0 {
            continue;
        }
        let resid = |a: C64, b: C64| {
            let vals = (0..u.len())
                .map(|j| lhs.values[j] - (a * u.values[j] + b * du[j] - du_d[j]))
                .collect();
            WaveField {
                grid: phi.grid,
                values: vals,
            }
            .norm_l2()
                / size
        };
        let i = C64::new(0.0, 1.0);
        out.unitary_form = out
            .unitary_form
            .max(resid(C64::new(r * r, 0.0), i * (r - s)));
        out.literal_form = out
            .literal_form
            .max(resid(C64::new(-r * r, 0.0), C64::new(r - s, 0.0)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mollifier_constants_match_high_precision_values() {
        // 60-digit quadrature of the unnormalized profile and its moments
        let c = ProfileConstants::of(BumpProfile::Mollifier);
        assert!((c.mass - 0.443_993_816_168_079_4).abs() < 1e-14, "{}", c.mass);
        assert!((c.l2 * c.l2 - 0.675_116_813_009_697_5).abs() < 1e-12);
        assert!((c.dx_l2 * c.dx_l2 - 2.077_745_668_366_741_4).abs() < 1e-11);
        assert!((c.dx_l1 - 2.0 * (-1.0_f64).exp() / c.mass).abs() < 1e-15);
    }

    #[test]
    fn bound_quantity_decays_like_quarter_power() {
        let a = bound_quantity(1e6, 0.0);
        let b = bound_quantity(1e8, 0.0);
        assert!(((a / b).log10() / 2.0 - 0.25).abs() < 0.01);
    }

    #[test]
    fn scaling_identities_and_remainder_order() {
        let res = scaling_family_check(&ScalingSpec::default()).unwrap();
        assert!(res.max_identity_error < 1e-8, "{:?}", res.rows);
        assert!((res.remainder_slope - 1.0).abs() < 0.3, "{}", res.remainder_slope);
    }

    #[test]
    fn far_field_energy_matches_direct_group() {
        // the bump's Fourier tail is heavy: direct evaluation needs a wide box
        // and a relaxed edge check, so only moderate ε is practical
        let eps = 0.5;
        let res = scaling_family_check(&ScalingSpec {
            eps: vec![eps],
            ..ScalingSpec::default()
        })
        .unwrap();
        let g = GridSpec::with_spacing(400.0, 0.01).unwrap();
        let direct = scaled_energy_direct(&g, BumpProfile::Mollifier, eps, 1.0, 1e-3).unwrap();
        let far = res.rows[0].energy_scaled;
        assert!((direct - far).abs() / far < 1e-6, "{direct} {far}");
    }

    #[test]
    fn identity_at_zero_shift_is_exact() {
        let g = GridSpec::with_spacing(30.0, 0.05).unwrap();
        let f = WaveField::gaussian(&g, 1.0, 0.0, 1.0, 0.5);
        let res = avron_identity_check(0.0, 0.0, &[f]).unwrap();
        assert!(res.unitary_form < 1e-10 && res.literal_form < 1e-10);
    }

    #[test]
    fn identity_for_opposite_and_equal_shifts() {
        let g = GridSpec::with_spacing(40.0, 0.05).unwrap();
        let f = WaveField::gaussian(&g, 1.0, 0.0, 1.0, 0.0);
        for (r, s) in [(0.3, -0.3), (0.5, 0.5)] {
            let res = avron_identity_check(r, s, std::slice::from_ref(&f)).unwrap();
            assert!(res.unitary_form < 1e-6, "{res:?}");
            assert!(res.literal_form > 1e-2, "{res:?}");
        }
    }
}
