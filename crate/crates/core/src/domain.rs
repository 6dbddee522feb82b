//! Spatial grid, the weight μ, cutoff functions and potentials.

use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};

/// Uniform symmetric grid on `[-X, X]` with an odd number of nodes, so `x = 0`
/// is always a node. Dirichlet data live on the two end nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    half_width: f64,
    n_points: usize,
}

impl GridSpec {
    pub fn new(half_width: f64, n_points: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return invalid(format!("half width must be positive, got {half_width}"));
        }
        if n_points < 31 {
            return invalid(format!("need at least 31 grid points, got {n_points}"));
        }
        if n_points.is_multiple_of(2) {
            return invalid(format!("n_points must be odd, got {n_points}"));
        }
        Ok(Self {
            half_width,
            n_points,
        })
    }

    /// Grid with spacing `dx`; `2X/dx` must be an even integer (to 1e-9).
    pub fn with_spacing(half_width: f64, dx: f64) -> Result<Self> {
        if !(dx.is_finite() && dx > 0.0) {
            return invalid(format!("dx must be positive, got {dx}"));
        }
        let cells = 2.0 * half_width / dx;
        let rounded = cells.round();
        if (cells - rounded).abs() > 1e-9 * cells.max(1.0) {
            return invalid(format!("2X/dx = {cells} is not an integer"));
        }
        Self::new(half_width, rounded as usize + 1)
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / (self.n_points - 1) as f64
    }

    /// Index of the node `x = 0`.
    pub fn center(&self) -> usize {
        (self.n_points - 1) / 2
    }

    pub fn x(&self, i: usize) -> f64 {
        // Symmetric construction keeps x(center + j) == -x(center - j) exactly.
        let j = i as f64 - self.center() as f64;
        j * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x(i)).collect()
    }

    pub fn check_radius(&self, radius: f64) -> Result<()> {
        if self.half_width < radius + 4.0 {
            return invalid(format!(
                "box half width {} too small for cutoff radius {radius} (need X >= R + 4)",
                self.half_width
            ));
        }
        Ok(())
    }
}

const BRIDGE: [f64; 4] = [1.0, 3.0 / 16.0, 1.0 / 32.0, -1.0 / 256.0];

/// The weight μ: an even C² polynomial bridge on `|x| <= 2`, `|x|` outside.
pub fn weight_mu(x: f64) -> f64 {
    let a = x.abs();
    if a >= 2.0 {
        return a;
    }
    let y = x * x;
    BRIDGE[0] + y * (BRIDGE[1] + y * (BRIDGE[2] + y * BRIDGE[3]))
}

pub fn weight_mu_dx(x: f64) -> f64 {
    if x.abs() >= 2.0 {
        return x.signum();
    }
    let y = x * x;
    x * (2.0 * BRIDGE[1] + y * (4.0 * BRIDGE[2] + y * 6.0 * BRIDGE[3]))
}

pub fn weight_mu_dxx(x: f64) -> f64 {
    if x.abs() >= 2.0 {
        return 0.0;
    }
    let y = x * x;
    2.0 * BRIDGE[1] + y * (12.0 * BRIDGE[2] + y * 30.0 * BRIDGE[3])
}

/// μ sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

pub fn build_weight_mu(grid: &GridSpec) -> WeightField {
    WeightField {
        grid: *grid,
        values: grid.points().into_iter().map(weight_mu).collect(),
    }
}

/// Quintic smoothstep `10t³ - 15t⁴ + 6t⁵` on [0, 1] and its two derivatives.
pub fn smoothstep(t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let t2 = t * t;
    let s = t2 * t * (10.0 + t * (-15.0 + 6.0 * t));
    let ds = 30.0 * t2 * (1.0 - t) * (1.0 - t);
    let dds = 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t);
    (s, ds, dds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffKind {
    /// 0 on `|x| <= R`, 1 on `|x| >= R+1`.
    Exterior,
    /// 1 on `|x| <= R+1`, 0 on `|x| >= R+2`.
    Interior,
    /// `x` on `|x| <= R+2`, 0 on `|x| >= R+3`.
    MultiplierQ,
    /// Constant 1 (degenerate control region).
    Unit,
}

/// Pointwise value, first and second derivative of a cutoff profile.
pub fn cutoff_profile(kind: CutoffKind, radius: f64, x: f64) -> (f64, f64, f64) {
    let a = x.abs();
    let sg = x.signum();
    match kind {
        CutoffKind::Unit => (1.0, 0.0, 0.0),
        CutoffKind::Exterior => {
            if a <= radius {
                (0.0, 0.0, 0.0)
            } else if a >= radius + 1.0 {
                (1.0, 0.0, 0.0)
            } else {
                let (s, ds, dds) = smoothstep(a - radius);
                (s, sg * ds, dds)
            }
        }
        CutoffKind::Interior => {
            if a <= radius + 1.0 {
                (1.0, 0.0, 0.0)
            } else if a >= radius + 2.0 {
                (0.0, 0.0, 0.0)
            } else {
                let (s, ds, dds) = smoothstep(a - radius - 1.0);
                (1.0 - s, -sg * ds, -dds)
            }
        }
        CutoffKind::MultiplierQ => {
            if a <= radius + 2.0 {
                (x, 1.0, 0.0)
            } else if a >= radius + 3.0 {
                (0.0, 0.0, 0.0)
            } else {
                let (s, ds, dds) = smoothstep(a - radius - 2.0);
                let g = 1.0 - s;
                (x * g, g - a * ds, -2.0 * sg * ds - x * dds)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutoffField {
    pub kind: CutoffKind,
    pub radius: f64,
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl CutoffField {
    /// Analytic first and second derivatives on the grid.
    pub fn derivatives(&self) -> (Vec<f64>, Vec<f64>) {
        let pts = self.grid.points();
        let mut d1 = Vec::with_capacity(pts.len());
        let mut d2 = Vec::with_capacity(pts.len());
        for x in pts {
            let (_, a, b) = cutoff_profile(self.kind, self.radius, x);
            d1.push(a);
            d2.push(b);
        }
        (d1, d2)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn build_cutoff(grid: &GridSpec, kind: CutoffKind, radius: f64) -> Result<CutoffField> {
    if kind != CutoffKind::Unit {
        if !(radius.is_finite() && radius > 0.0) {
            return invalid(format!("cutoff radius must be positive, got {radius}"));
        }
        grid.check_radius(radius)?;
    }
    let values = grid
        .points()
        .into_iter()
        .map(|x| cutoff_profile(kind, radius, x).0)
        .collect();
    Ok(CutoffField {
        kind,
        radius,
        grid: *grid,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    WeightMu,
    LinearField { slope: f64 },
    AbsValue,
    Custom { values: Vec<f64> },
}

/// Largest discrete first/second derivative accepted for a custom potential.
pub const CUSTOM_DERIVATIVE_LIMIT: f64 = 1.0e3;

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    pub spec: PotentialSpec,
    pub grid: GridSpec,
    pub values: Vec<f64>,
    /// α(X)/μ(X)
    pub slope_plus: f64,
    /// α(-X)/μ(-X)
    pub slope_minus: f64,
}

impl PotentialField {
    /// `max |α_x|` from forward differences.
    pub fn max_slope(&self) -> f64 {
        let dx = self.grid.dx();
        self.values
            .windows(2)
            .fold(0.0, |m, w| m.max(((w[1] - w[0]) / dx).abs()))
    }

    pub fn max_curvature(&self) -> f64 {
        let dx2 = self.grid.dx().powi(2);
        self.values
            .windows(3)
            .fold(0.0, |m, w| m.max(((w[2] - 2.0 * w[1] + w[0]) / dx2).abs()))
    }

    /// True when the field coincides with μ on the grid.
    pub fn is_weight_mu(&self) -> bool {
        self.values
            .iter()
            .zip(self.grid.points())
            .all(|(&a, x)| a == weight_mu(x))
    }
}

pub fn build_potential(grid: &GridSpec, spec: &PotentialSpec) -> Result<PotentialField> {
    let pts = grid.points();
    let values: Vec<f64> = match spec {
        PotentialSpec::WeightMu => pts.iter().map(|&x| weight_mu(x)).collect(),
        PotentialSpec::LinearField { slope } => {
            if !slope.is_finite() {
                return invalid("linear field slope must be finite");
            }
            pts.iter().map(|&x| slope * x).collect()
        }
        PotentialSpec::AbsValue => pts.iter().map(|x| x.abs()).collect(),
        PotentialSpec::Custom { values } => {
            if values.len() != grid.n_points() {
                return invalid(format!(
                    "custom potential has {} values, grid has {}",
                    values.len(),
                    grid.n_points()
                ));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return invalid("custom potential has non-finite values");
            }
            values.clone()
        }
    };
    let n = grid.n_points();
    let field = PotentialField {
        spec: spec.clone(),
        grid: *grid,
        slope_plus: values[n - 1] / weight_mu(pts[n - 1]),
        slope_minus: values[0] / weight_mu(pts[0]),
        values,
    };
    if matches!(spec, PotentialSpec::Custom { .. }) {
        let (d1, d2) = (field.max_slope(), field.max_curvature());
        if d1 > CUSTOM_DERIVATIVE_LIMIT || d2 > CUSTOM_DERIVATIVE_LIMIT {
            return invalid(format!(
                "custom potential derivatives too large: |a_x| <= {d1:.3e}, |a_xx| <= {d2:.3e}"
            ));
        }
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::with_spacing(10.0, 0.05).unwrap()
    }

    #[test]
    fn grid_contains_origin_and_is_symmetric() {
        let g = grid();
        assert_eq!(g.n_points(), 401);
        assert_eq!(g.x(g.center()), 0.0);
        for j in 0..g.n_points() {
            assert_eq!(g.x(j), -g.x(g.n_points() - 1 - j));
        }
        assert!(GridSpec::new(1.0, 30).is_err());
        assert!(GridSpec::new(1.0, 32).is_err());
        assert!(GridSpec::with_spacing(1.0, 0.3).is_err());
    }

    #[test]
    fn weight_values_and_seam() {
        assert_eq!(weight_mu(0.0), 1.0);
        assert!((weight_mu(2.0 - 1e-15) - 2.0).abs() < 1e-12);
        let left = |x: f64| {
            let y = x * x;
            BRIDGE[0] + y * (BRIDGE[1] + y * (BRIDGE[2] + y * BRIDGE[3]))
        };
        assert!((left(2.0) - 2.0).abs() < 1e-15);
        // one-sided derivatives of the bridge at 2 from the analytic forms
        assert!((weight_mu_dx(2.0 - 1e-14) - 1.0).abs() < 1e-12);
        assert!(weight_mu_dxx(2.0 - 1e-14).abs() < 1e-12);
        // finite-difference check of the analytic derivatives
        for &x in &[0.3, 1.1, 1.9] {
            let h = 1e-5;
            let d = (weight_mu(x + h) - weight_mu(x - h)) / (2.0 * h);
            let dd = (weight_mu(x + h) - 2.0 * weight_mu(x) + weight_mu(x - h)) / (h * h);
            assert!((d - weight_mu_dx(x)).abs() < 1e-8);
            assert!((dd - weight_mu_dxx(x)).abs() < 1e-4);
        }
        assert_eq!(weight_mu(5.0), 5.0);
        assert_eq!(weight_mu(-5.0), 5.0);
    }

    #[test]
    fn weight_bounds() {
        let mut prev = weight_mu(0.0);
        for i in 1..=4000 {
            let x = i as f64 * 1e-3;
            let m = weight_mu(x);
            assert!(m >= 1.0 && m >= x);
            assert!(m >= prev);
            assert!((m - x).abs() <= 1.0);
            assert!(weight_mu_dx(x) <= 1.0 + 1e-15);
            prev = m;
        }
    }

    #[test]
    fn cutoff_plateaus() {
        let g = grid();
        for (x, want) in [(1.9, 0.0), (3.1, 1.0), (2.5, 0.5)] {
            assert_eq!(cutoff_profile(CutoffKind::Exterior, 2.0, x).0, want);
        }
        assert_eq!(cutoff_profile(CutoffKind::MultiplierQ, 2.0, 3.0).0, 3.0);
        assert_eq!(cutoff_profile(CutoffKind::MultiplierQ, 2.0, 5.5).0, 0.0);
        let ext = build_cutoff(&g, CutoffKind::Exterior, 2.0).unwrap();
        let int = build_cutoff(&g, CutoffKind::Interior, 1.0).unwrap();
        // interior(R=1) vanishes exactly where |x| >= 3, exterior(R=2) is 1 there
        for (i, x) in g.points().into_iter().enumerate() {
            if x.abs() >= 3.0 {
                assert_eq!(int.values[i], 0.0);
                assert_eq!(ext.values[i], 1.0);
            }
        }
        assert!(build_cutoff(&g, CutoffKind::Exterior, 7.0).is_err());
        assert!(build_cutoff(&g, CutoffKind::Exterior, 0.0).is_err());
    }

    #[test]
    fn cutoff_derivatives_match_finite_differences() {
        for kind in [CutoffKind::Exterior, CutoffKind::Interior, CutoffKind::MultiplierQ] {
            for i in 0..200 {
                let x = -6.0 + 0.0613 * i as f64;
                let h = 1e-5;
                let f = |y| cutoff_profile(kind, 1.5, y).0;
                let (_, d1, d2) = cutoff_profile(kind, 1.5, x);
                let fd1 = (f(x + h) - f(x - h)) / (2.0 * h);
                let fd2 = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
                assert!((fd1 - d1).abs() < 1e-7, "{kind:?} x={x}");
                assert!((fd2 - d2).abs() < 1e-3, "{kind:?} x={x}");
            }
        }
    }

    #[test]
    fn parity_of_built_fields() {
        let g = grid();
        let n = g.n_points();
        let mu = build_weight_mu(&g);
        let q = build_cutoff(&g, CutoffKind::MultiplierQ, 2.0).unwrap();
        for j in 0..n {
            assert_eq!(mu.values[j], mu.values[n - 1 - j]);
            assert_eq!(q.values[j], -q.values[n - 1 - j]);
        }
    }

    #[test]
    fn potentials() {
        let g = grid();
        let p = build_potential(&g, &PotentialSpec::WeightMu).unwrap();
        assert_eq!((p.slope_plus, p.slope_minus), (1.0, 1.0));
        assert!(p.is_weight_mu());
        let e = build_potential(&g, &PotentialSpec::LinearField { slope: -1.0 }).unwrap();
        assert_eq!((e.slope_plus, e.slope_minus), (-1.0, 1.0));
        assert_eq!(e.values[g.center() + 20], -g.x(g.center() + 20));
        let z = build_potential(&g, &PotentialSpec::LinearField { slope: 0.0 }).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));
        let mut rough = vec![0.0; g.n_points()];
        rough[100] = 10.0;
        assert!(build_potential(&g, &PotentialSpec::Custom { values: rough }).is_err());
        let smooth: Vec<f64> = g.points().iter().map(|x| (x * 0.5).sin()).collect();
        assert!(build_potential(&g, &PotentialSpec::Custom { values: smooth }).is_ok());
    }
}
