//! The nonlocal term `m(φ)(x) = ∫ ρ(x,y)|φ(y)|² dy` and its estimate suite.

use crate::domain::{weight_mu, GridSpec};
use crate::error::{invalid, Result};
use crate::field::{WaveField, C64};
use serde::{Deserialize, Serialize};

/// Kernel choice. The default splits the 1D Poisson kernel as
/// `ρ(x,y) = |x-y| - μ(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    #[default]
    PoissonSplit,
    Zero,
    /// Row-major `n×n` samples `ρ(x_i, y_j)`.
    CustomMatrix { values: Vec<f64> },
}

/// A kernel bound to a grid, with its hypotheses checked.
#[derive(Debug, Clone)]
pub struct HartreeKernel {
    pub spec: KernelSpec,
    pub grid: GridSpec,
    mu: Vec<f64>,
    /// largest `|ρ(x,y)| - μ(y)` over grid pairs (≤ 0 when the bound holds)
    pub bound_excess: f64,
    /// largest discrete `|∂ₓρ|`
    pub max_dx: f64,
}

impl HartreeKernel {
    pub fn build(grid: &GridSpec, spec: KernelSpec) -> Result<Self> {
        let n = grid.n_points();
        let mu: Vec<f64> = grid.points().into_iter().map(weight_mu).collect();
        let mut kernel = Self {
            spec,
            grid: *grid,
            mu,
            bound_excess: f64::NEG_INFINITY,
            max_dx: 0.0,
        };
        if let KernelSpec::CustomMatrix { values } = &kernel.spec {
            if values.len() != n * n {
                return invalid(format!(
                    "custom kernel has {} entries, grid needs {}x{}",
                    values.len(),
                    n,
                    n
                ));
            }
        }
        if kernel.spec != KernelSpec::Zero {
            let (excess, slope) = kernel.scan_hypotheses();
            if excess > 1e-12 {
                return invalid(format!(
                    "kernel violates |rho(x,y)| <= mu(y) by {excess:.3e}"
                ));
            }
            kernel.bound_excess = excess;
            kernel.max_dx = slope;
        }
        Ok(kernel)
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match &self.spec {
            KernelSpec::PoissonSplit => (self.grid.x(i) - self.grid.x(j)).abs() - self.mu[i],
            KernelSpec::Zero => 0.0,
            KernelSpec::CustomMatrix { values } => values[i * self.grid.n_points() + j],
        }
    }

    /// Exhaustive scan of `|ρ| - μ(y)` and of the forward difference in `x`.
    fn scan_hypotheses(&self) -> (f64, f64) {
        let n = self.grid.n_points();
        let dx = self.grid.dx();
        let mut excess = f64::NEG_INFINITY;
        let mut slope = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let r = self.entry(i, j);
                excess = excess.max(r.abs() - self.mu[j]);
                if i + 1 < n {
                    slope = slope.max(((self.entry(i + 1, j) - r) / dx).abs());
                }
            }
        }
        (excess, slope)
    }

    /// `m(φ)` on the grid. The split kernel costs O(n) through prefix sums.
    pub fn m_of(&self, phi: &WaveField) -> Result<Vec<f64>> {
        self.check(phi)?;
        let n = phi.len();
        Ok(match &self.spec {
            KernelSpec::Zero => vec![0.0; n],
            KernelSpec::PoissonSplit => self.split_prefix(phi),
            KernelSpec::CustomMatrix { .. } => self.m_of_direct(phi)?,
        })
    }

    /// O(n²) quadrature, used as the reference for the prefix-sum evaluator.
    pub fn m_of_direct(&self, phi: &WaveField) -> Result<Vec<f64>> {
        self.check(phi)?;
        let n = phi.len();
        let w = trapezoid_weights(&self.grid);
        let dens: Vec<f64> = phi.values.iter().map(|z| z.norm_sqr()).collect();
        Ok((0..n)
            .map(|i| (0..n).map(|j| self.entry(i, j) * w[j] * dens[j]).sum())
            .collect())
    }

    fn split_prefix(&self, phi: &WaveField) -> Vec<f64> {
        let n = phi.len();
        let w = trapezoid_weights(&self.grid);
        let x = self.grid.points();
        let dens: Vec<f64> = phi
            .values
            .iter()
            .zip(&w)
            .map(|(z, wj)| z.norm_sqr() * wj)
            .collect();
        let total: f64 = dens.iter().sum();
        let total_x: f64 = dens.iter().zip(&x).map(|(d, y)| d * y).sum();
        // running sums over y_j <= x_i
        let mut below = 0.0;
        let mut below_x = 0.0;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            below += dens[i];
            below_x += dens[i] * x[i];
            let above = total - below;
            let above_x = total_x - below_x;
            let conv = x[i] * below - below_x + above_x - x[i] * above;
            out.push(conv - self.mu[i] * total);
        }
        out
    }

    /// `m(φ)·φ`.
    pub fn apply_nonlinear(&self, phi: &WaveField) -> Result<WaveField> {
        let m = self.m_of(phi)?;
        Ok(phi.mul_real(&m))
    }

    fn check(&self, phi: &WaveField) -> Result<()> {
        if phi.grid != self.grid {
            return invalid("field grid differs from kernel grid");
        }
        Ok(())
    }

    pub fn weight(&self) -> &[f64] {
        &self.mu
    }
}

fn trapezoid_weights(grid: &GridSpec) -> Vec<f64> {
    let n = grid.n_points();
    let mut w = vec![grid.dx(); n];
    w[0] *= 0.5;
    w[n - 1] *= 0.5;
    w
}

/// `m(φ)` for a kernel spec on the field's grid.
pub fn m_of(phi: &WaveField, kernel: &HartreeKernel) -> Result<Vec<f64>> {
    kernel.m_of(phi)
}

pub fn apply_nonlinear(phi: &WaveField, kernel: &HartreeKernel) -> Result<WaveField> {
    kernel.apply_nonlinear(phi)
}

/// Both sides of the two Hartree estimates for one pair of fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HartreePairCheck {
    pub sup_m: f64,
    pub weighted_mass: f64,
    pub lipschitz_lhs: f64,
    pub lipschitz_rhs: f64,
    pub difference_h: f64,
}

impl HartreePairCheck {
    pub fn sup_bound_holds(&self) -> bool {
        self.sup_m <= self.weighted_mass * (1.0 + 1e-12)
    }

    pub fn lipschitz_holds(&self) -> bool {
        self.lipschitz_lhs <= self.lipschitz_rhs * (1.0 + 1e-12)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HartreeReport {
    pub pairs: Vec<HartreePairCheck>,
    pub sup_pass: usize,
    pub lipschitz_pass: usize,
    /// largest `lhs/rhs` seen for the Lipschitz estimate
    pub worst_ratio: f64,
}

impl HartreeReport {
    pub fn all_pass(&self) -> bool {
        self.sup_pass == self.pairs.len() && self.lipschitz_pass == self.pairs.len()
    }
}

/// Grid `H` norm `(‖u_x‖² + ‖u‖²_{L²_μ})^{1/2}`, forward differences.
fn h_norm(u: &WaveField, mu: &[f64]) -> f64 {
    u.norm_h(mu)
}

/// Evaluate `‖m(φ)‖_∞ ≤ ‖φ‖²_{L²_μ}` and the 3/2-prefactor Lipschitz estimate
/// on each pair.
pub fn verify_hartree_bounds(
    kernel: &HartreeKernel,
    pairs: &[(WaveField, WaveField)],
) -> Result<HartreeReport> {
    let mu = kernel.weight();
    let mut out = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        let ma = kernel.m_of(a)?;
        let sup_m = ma.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let weighted_mass = a.norm_weighted(mu).powi(2);
        let na = a.mul_real(&ma);
        let nb = kernel.apply_nonlinear(b)?;
        let lhs = h_norm(&na.sub(&nb), mu);
        let (ha, hb) = (h_norm(a, mu), h_norm(b, mu));
        let diff = h_norm(&a.sub(b), mu);
        let rhs = 1.5 * (ha * ha + ha * hb + hb * hb) * diff;
        out.push(HartreePairCheck {
            sup_m,
            weighted_mass,
            lipschitz_lhs: lhs,
            lipschitz_rhs: rhs,
            difference_h: diff,
        });
    }
    let sup_pass = out.iter().filter(|p| p.sup_bound_holds()).count();
    let lipschitz_pass = out.iter().filter(|p| p.lipschitz_holds()).count();
    let worst_ratio = out
        .iter()
        .filter(|p| p.lipschitz_rhs > 0.0)
        .map(|p| p.lipschitz_lhs / p.lipschitz_rhs)
        .fold(0.0, f64::max);
    Ok(HartreeReport {
        pairs: out,
        sup_pass,
        lipschitz_pass,
        worst_ratio,
    })
}

/// Scale a pair by each factor and fit the log-log exponent of
/// `lhs/‖φ-φ₁‖_H` against the factor (2 for a cubic map).
pub fn lipschitz_scaling_exponent(
    kernel: &HartreeKernel,
    a: &WaveField,
    b: &WaveField,
    factors: &[f64],
) -> Result<f64> {
    let mut pts = Vec::with_capacity(factors.len());
    for &c in factors {
        let s = C64::new(c, 0.0);
        let r = verify_hartree_bounds(kernel, &[(a.scaled(s), b.scaled(s))])?;
        let p = r.pairs[0];
        pts.push((c.ln(), (p.lipschitz_lhs / p.difference_h).ln()));
    }
    Ok(crate::stats::slope(&pts))
}
