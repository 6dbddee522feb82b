//! Complex fields on the grid and the discrete norms used throughout.

use crate::domain::GridSpec;
use crate::error::{invalid, Result};
use num_complex::Complex64;

pub type C64 = Complex64;

/// Complex samples on a [`GridSpec`]. End nodes carry Dirichlet data.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    pub grid: GridSpec,
    pub values: Vec<C64>,
}

impl WaveField {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self {
            grid: *grid,
            values: vec![C64::new(0.0, 0.0); grid.n_points()],
        }
    }

    pub fn from_values(grid: &GridSpec, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return invalid(format!(
                "field has {} samples, grid has {}",
                values.len(),
                grid.n_points()
            ));
        }
        Ok(Self {
            grid: *grid,
            values,
        })
    }

    pub fn from_real(grid: &GridSpec, values: &[f64]) -> Result<Self> {
        Self::from_values(grid, values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(f64) -> C64) -> Self {
        Self {
            grid: *grid,
            values: grid.points().into_iter().map(f).collect(),
        }
    }

    /// Gaussian `amp·exp(-(x-x0)²/(2σ²) + i k x)` with Dirichlet ends zeroed.
    pub fn gaussian(grid: &GridSpec, amp: f64, center: f64, width: f64, momentum: f64) -> Self {
        let mut f = Self::from_fn(grid, |x| {
            let e = (-(x - center).powi(2) / (2.0 * width * width)).exp();
            C64::from_polar(amp * e, momentum * x)
        });
        f.clamp_ends();
        f
    }

    pub fn clamp_ends(&mut self) {
        let n = self.values.len();
        self.values[0] = C64::new(0.0, 0.0);
        self.values[n - 1] = C64::new(0.0, 0.0);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dx(&self) -> f64 {
        self.grid.dx()
    }

    /// `dx·Σ conj(u)·v`
    pub fn inner(&self, other: &WaveField) -> C64 {
        self.dx() * inner_raw(&self.values, &other.values)
    }

    pub fn norm_l2(&self) -> f64 {
        (self.dx() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
    }

    pub fn norm_l1(&self) -> f64 {
        self.dx() * self.values.iter().map(|v| v.norm()).sum::<f64>()
    }

    pub fn norm_linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// `(dx·Σ w|u|²)^{1/2}`
    pub fn norm_weighted(&self, weight: &[f64]) -> f64 {
        (self.dx()
            * self
                .values
                .iter()
                .zip(weight)
                .map(|(v, w)| w * v.norm_sqr())
                .sum::<f64>())
        .sqrt()
    }

    /// Forward-difference gradient norm; equals `⟨u, -D²u⟩^{1/2}` for Dirichlet data.
    pub fn norm_grad(&self) -> f64 {
        let dx = self.dx();
        (self
            .values
            .windows(2)
            .map(|w| (w[1] - w[0]).norm_sqr())
            .sum::<f64>()
            / dx)
            .sqrt()
    }

    /// Forward-difference gradient in the L¹ norm.
    pub fn norm_grad_l1(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Grid H norm `(‖u_x‖² + ‖u‖²_{L²_w})^{1/2}` with forward differences.
    pub fn norm_h(&self, weight: &[f64]) -> f64 {
        (self.norm_grad().powi(2) + self.norm_weighted(weight).powi(2)).sqrt()
    }

    /// Quadratic-form norm `⟨u, (-D² + V) u⟩^{1/2}`.
    pub fn norm_energy(&self, potential: &[f64]) -> f64 {
        self.norm_h(potential)
    }

    pub fn scale(&mut self, a: C64) {
        for v in &mut self.values {
            *v *= a;
        }
    }

    pub fn scaled(&self, a: C64) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// `self += a·other`
    pub fn axpy(&mut self, a: C64, other: &WaveField) {
        for (s, o) in self.values.iter_mut().zip(&other.values) {
            *s += a * o;
        }
    }

    pub fn sub(&self, other: &WaveField) -> Self {
        let mut out = self.clone();
        out.axpy(C64::new(-1.0, 0.0), other);
        out
    }

    pub fn mul_real(&self, w: &[f64]) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().zip(w).map(|(v, a)| v * a).collect(),
        }
    }

    /// Central-difference derivative at interior nodes, one-sided at the ends.
    pub fn derivative_central(&self) -> Vec<C64> {
        let n = self.values.len();
        let h = self.dx();
        let u = &self.values;
        let mut d = vec![C64::new(0.0, 0.0); n];
        for j in 1..n - 1 {
            d[j] = (u[j + 1] - u[j - 1]) / (2.0 * h);
        }
        d[0] = (u[1] - u[0]) / h;
        d[n - 1] = (u[n - 1] - u[n - 2]) / h;
        d
    }
}

pub(crate) fn inner_raw(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Random smooth compactly supported test field: a few Gaussian packets with
/// random centers, widths, phases and momenta, supported in `[-reach, reach]`.
pub fn random_packet<R: rand::Rng + ?Sized>(grid: &GridSpec, rng: &mut R, reach: f64) -> WaveField {
    use rand::RngExt;
    let n_bumps = rng.random_range(1..=3);
    let mut f = WaveField::zeros(grid);
    for _ in 0..n_bumps {
        let c = rng.random_range(-0.6 * reach..0.6 * reach);
        let w = rng.random_range(0.3..1.0);
        let k = rng.random_range(-2.0..2.0);
        let a = C64::from_polar(rng.random_range(0.2..1.0), rng.random_range(0.0..std::f64::consts::TAU));
        let g = WaveField::gaussian(grid, 1.0, c, w, k);
        f.axpy(a, &g);
    }
    f.clamp_ends();
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms_of_gaussian() {
        let g = GridSpec::with_spacing(12.0, 0.01).unwrap();
        let f = WaveField::gaussian(&g, 1.0, 0.0, 1.0, 0.0);
        // ∫ e^{-x²} = √π, ∫ x² e^{-x²} = √π/2
        let pi = std::f64::consts::PI;
        assert!((f.norm_l2().powi(2) - pi.sqrt()).abs() < 1e-12);
        assert!((f.norm_l1() - (2.0 * pi).sqrt()).abs() < 1e-12);
        assert!((f.norm_grad().powi(2) - pi.sqrt() / 2.0).abs() < 5e-5);
        assert_eq!(f.norm_linf(), 1.0);
    }

    #[test]
    fn inner_is_sesquilinear() {
        let g = GridSpec::new(3.0, 31).unwrap();
        let f = WaveField::gaussian(&g, 1.0, 0.1, 0.7, 1.0);
        let h = WaveField::gaussian(&g, 1.0, -0.2, 0.5, -0.5);
        let a = C64::new(0.3, -1.2);
        let lhs = f.inner(&h.scaled(a));
        assert!((lhs - a * f.inner(&h)).norm() < 1e-14);
        assert!((f.scaled(a).inner(&h) - a.conj() * f.inner(&h)).norm() < 1e-14);
    }
}
