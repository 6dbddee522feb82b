//! Discrete Schrödinger operators, their eigenbases, and the weighted
//! Sobolev scale `W^k` realized on eigen-coefficients.

use crate::domain::{weight_mu, GridSpec, PotentialField, PotentialSpec, WeightField};
use crate::error::{invalid, Error, Result};
use crate::field::{WaveField, C64};
use crate::tridiag::{lowest_eigenpairs, thomas_real, SymTridiag};
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};

static NEXT_BASIS_ID: AtomicU64 = AtomicU64::new(1);

/// `-D² + V` with second-order central differences and Dirichlet ends,
/// acting on the interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOperator {
    pub grid: GridSpec,
    /// potential on all nodes
    pub potential: Vec<f64>,
    pub matrix: SymTridiag,
}

impl DiscreteOperator {
    pub fn new(grid: &GridSpec, potential: &[f64]) -> Result<Self> {
        if potential.len() != grid.n_points() {
            return invalid("potential length does not match grid");
        }
        let n = grid.n_points();
        let h2 = grid.dx() * grid.dx();
        let diag = (1..n - 1).map(|j| 2.0 / h2 + potential[j]).collect();
        let off = vec![-1.0 / h2; n - 3];
        Ok(Self {
            grid: *grid,
            potential: potential.to_vec(),
            matrix: SymTridiag::new(diag, off),
        })
    }

    pub fn from_field(v: &PotentialField) -> Result<Self> {
        Self::new(&v.grid, &v.values)
    }

    pub fn off_diagonal(&self) -> f64 {
        -1.0 / self.grid.dx().powi(2)
    }

    /// Row-sum bound on the operator norm.
    pub fn norm_bound(&self) -> f64 {
        let (lo, hi) = self.matrix.gershgorin();
        lo.abs().max(hi.abs())
    }

    /// `A u` on the full grid (end nodes of the result are zero).
    pub fn apply(&self, u: &[C64]) -> Vec<C64> {
        let n = u.len();
        let mut out = vec![C64::new(0.0, 0.0); n];
        self.matrix.matvec_complex(&u[1..n - 1], &mut out[1..n - 1]);
        out
    }

    pub fn apply_real(&self, u: &[f64]) -> Vec<f64> {
        let n = u.len();
        let mut out = vec![0.0; n];
        self.matrix.matvec(&u[1..n - 1], &mut out[1..n - 1]);
        out
    }

    /// Solve `A x = b` on the interior (A must be positive definite).
    pub fn solve_real(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut x = vec![0.0; n];
        x[1..n - 1].copy_from_slice(&b[1..n - 1]);
        let off = &self.matrix.off;
        thomas_real(off, &self.matrix.diag, off, &mut x[1..n - 1]);
        x
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let re: Vec<f64> = b.iter().map(|z| z.re).collect();
        let im: Vec<f64> = b.iter().map(|z| z.im).collect();
        let (xr, xi) = (self.solve_real(&re), self.solve_real(&im));
        xr.into_iter()
            .zip(xi)
            .map(|(a, b)| C64::new(a, b))
            .collect()
    }

    /// `⟨u, A u⟩` in the discrete L² pairing.
    pub fn quadratic_form(&self, u: &WaveField) -> f64 {
        let au = self.apply(&u.values);
        u.inner(&WaveField {
            grid: u.grid,
            values: au,
        })
        .re
    }
}

/// Which operator's eigenbasis defines the `W^k` norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MetricOperator {
    /// `-∂² + μ`
    #[default]
    Weight,
    /// `-∂² + |x|`
    AbsValue,
}

impl MetricOperator {
    pub fn potential_spec(self) -> PotentialSpec {
        match self {
            MetricOperator::Weight => PotentialSpec::WeightMu,
            MetricOperator::AbsValue => PotentialSpec::AbsValue,
        }
    }
}

/// Sobolev order tag, `-3 ..= 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SobolevOrder(i8);

impl SobolevOrder {
    pub const MIN: i8 = -3;
    pub const MAX: i8 = 2;

    pub fn new(k: i8) -> Result<Self> {
        if (Self::MIN..=Self::MAX).contains(&k) {
            Ok(Self(k))
        } else {
            Err(Error::OrderMismatch(format!("order {k} outside -3..=2")))
        }
    }

    pub fn get(self) -> i8 {
        self.0
    }
}

/// Eigen-coefficients `û(N) = ⟨u, φ_N⟩` of a field, tagged with the space `W^k`
/// it is regarded in.
#[derive(Debug, Clone, PartialEq)]
pub struct WkVector {
    pub basis_id: u64,
    pub order: SobolevOrder,
    pub coeffs: Vec<C64>,
}

impl WkVector {
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn scaled(&self, a: C64) -> Self {
        Self {
            basis_id: self.basis_id,
            order: self.order,
            coeffs: self.coeffs.iter().map(|c| c * a).collect(),
        }
    }
}

/// Fractional powers of the metric operator usable as Riesz maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RieszPower {
    Inverse,
    InverseSqrt,
    Sqrt,
    Full,
}

impl RieszPower {
    pub fn exponent(self) -> f64 {
        match self {
            RieszPower::Inverse => -1.0,
            RieszPower::InverseSqrt => -0.5,
            RieszPower::Sqrt => 0.5,
            RieszPower::Full => 1.0,
        }
    }

    /// Change of Sobolev order, `-2s`.
    fn order_shift(self) -> i8 {
        match self {
            RieszPower::Inverse => 2,
            RieszPower::InverseSqrt => 1,
            RieszPower::Sqrt => -1,
            RieszPower::Full => -2,
        }
    }
}

/// The lowest `n_modes` eigenpairs of a [`DiscreteOperator`], with vectors
/// orthonormal in the discrete L² inner product.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    id: u64,
    pub grid: GridSpec,
    pub eigenvalues: Vec<f64>,
    /// row-major: mode `k` occupies `vectors[k*n .. (k+1)*n]`, full grid
    vectors: Vec<f64>,
    potential: Vec<f64>,
}

impl SpectralBasis {
    pub fn id(&self) -> u64 {
        self.id
    }

    /// Potential of the operator this basis diagonalizes.
    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn mode(&self, k: usize) -> &[f64] {
        let n = self.grid.n_points();
        &self.vectors[k * n..(k + 1) * n]
    }

    pub fn mode_field(&self, k: usize) -> WaveField {
        WaveField::from_real(&self.grid, self.mode(k)).expect("mode length")
    }

    /// Basis vector `φ_k` as a coefficient vector of the given order.
    pub fn unit(&self, k: usize, order: SobolevOrder) -> WkVector {
        let mut coeffs = vec![C64::new(0.0, 0.0); self.n_modes()];
        coeffs[k] = C64::new(1.0, 0.0);
        self.wrap(coeffs, order)
    }

    pub fn zero(&self, order: SobolevOrder) -> WkVector {
        self.wrap(vec![C64::new(0.0, 0.0); self.n_modes()], order)
    }

    pub fn wrap(&self, coeffs: Vec<C64>, order: SobolevOrder) -> WkVector {
        assert_eq!(coeffs.len(), self.n_modes());
        WkVector {
            basis_id: self.id,
            order,
            coeffs,
        }
    }

    pub fn check(&self, v: &WkVector) -> Result<()> {
        if v.basis_id != self.id {
            return Err(Error::BasisMismatch {
                expected: self.id,
                found: v.basis_id,
            });
        }
        if v.coeffs.len() != self.n_modes() {
            return invalid("coefficient vector length does not match basis");
        }
        Ok(())
    }

    /// Raw coefficients `dx·Σ φ_k u` of a grid vector.
    pub fn project_raw(&self, u: &[C64]) -> Vec<C64> {
        let dx = self.grid.dx();
        (0..self.n_modes())
            .map(|k| {
                let m = self.mode(k);
                let s: C64 = m.iter().zip(u).map(|(a, b)| b * a).sum();
                s * dx
            })
            .collect()
    }

    pub fn project(&self, u: &WaveField, order: SobolevOrder) -> Result<WkVector> {
        if u.grid != self.grid {
            return invalid("field grid differs from basis grid");
        }
        Ok(self.wrap(self.project_raw(&u.values), order))
    }

    pub fn expand_raw(&self, coeffs: &[C64]) -> Vec<C64> {
        let n = self.grid.n_points();
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (k, c) in coeffs.iter().enumerate() {
            if *c == C64::new(0.0, 0.0) {
                continue;
            }
            for (o, m) in out.iter_mut().zip(self.mode(k)) {
                *o += c * m;
            }
        }
        out
    }

    pub fn expand(&self, v: &WkVector) -> Result<WaveField> {
        self.check(v)?;
        WaveField::from_values(&self.grid, self.expand_raw(&v.coeffs))
    }

    /// `Σ λ_N^k conj(û_N) v̂_N`. Both vectors must lie in `W^k`, i.e. carry an
    /// order tag `>= k`.
    pub fn wk_inner(&self, u: &WkVector, v: &WkVector, k: i8) -> Result<C64> {
        self.check(u)?;
        self.check(v)?;
        if u.order.get() < k || v.order.get() < k {
            return Err(Error::OrderMismatch(format!(
                "pairing in W^{k} needs orders >= {k}, got {} and {}",
                u.order.get(),
                v.order.get()
            )));
        }
        Ok(self.weighted_inner(&u.coeffs, &v.coeffs, k as f64))
    }

    pub fn weighted_inner(&self, a: &[C64], b: &[C64], k: f64) -> C64 {
        a.iter()
            .zip(b)
            .zip(&self.eigenvalues)
            .map(|((x, y), l)| x.conj() * y * l.powf(k))
            .sum()
    }

    pub fn wk_norm(&self, u: &WkVector, k: i8) -> Result<f64> {
        Ok(self.wk_inner(u, u, k)?.re.max(0.0).sqrt())
    }

    /// Norm of raw coefficients with weight `λ^k`.
    pub fn norm_raw(&self, a: &[C64], k: f64) -> f64 {
        self.weighted_inner(a, a, k).re.max(0.0).sqrt()
    }

    /// Multiply coefficients by `λ^s`; the order tag drops by `2s`.
    pub fn riesz_and_powers(&self, u: &WkVector, power: RieszPower) -> Result<WkVector> {
        self.check(u)?;
        let order = SobolevOrder::new(u.order.get() + power.order_shift())?;
        let s = power.exponent();
        let coeffs = u
            .coeffs
            .iter()
            .zip(&self.eigenvalues)
            .map(|(c, l)| c * l.powf(s))
            .collect();
        Ok(WkVector {
            basis_id: self.id,
            order,
            coeffs,
        })
    }

    /// Largest relative residual `‖A φ - λ φ‖ / ‖A‖` and orthonormality defect.
    pub fn quality(&self, op: &DiscreteOperator) -> (f64, f64) {
        let norm = op.norm_bound();
        let dx = self.grid.dx();
        let mut res = 0.0_f64;
        for k in 0..self.n_modes() {
            let v = self.mode(k);
            let av = op.apply_real(v);
            let r: f64 = av
                .iter()
                .zip(v)
                .map(|(a, b)| (a - self.eigenvalues[k] * b).powi(2))
                .sum::<f64>();
            res = res.max((r * dx).sqrt() / norm);
        }
        let mut defect = 0.0_f64;
        let check = self.n_modes().min(64);
        for i in 0..check {
            for j in 0..=i {
                let p: f64 = self.mode(i).iter().zip(self.mode(j)).map(|(a, b)| a * b).sum::<f64>() * dx;
                let want = if i == j { 1.0 } else { 0.0 };
                defect = defect.max((p - want).abs());
            }
        }
        (res, defect)
    }
}

/// Assemble `-D² + V` and compute its lowest `n_modes` eigenpairs.
pub fn assemble_and_decompose(
    grid: &GridSpec,
    potential: &PotentialField,
    n_modes: usize,
) -> Result<(DiscreteOperator, SpectralBasis)> {
    let n = grid.n_points();
    if n_modes == 0 || n_modes > n - 2 {
        return invalid(format!("n_modes must be in 1..={}, got {n_modes}", n - 2));
    }
    let op = DiscreteOperator::new(grid, &potential.values)?;
    let (values, vecs) = lowest_eigenpairs(&op.matrix, n_modes)?;
    let scale = 1.0 / grid.dx().sqrt();
    let mut flat = vec![0.0; n_modes * n];
    for (k, v) in vecs.iter().enumerate() {
        let row = &mut flat[k * n..(k + 1) * n];
        for (dst, src) in row[1..n - 1].iter_mut().zip(v) {
            *dst = src * scale;
        }
    }
    let basis = SpectralBasis {
        id: NEXT_BASIS_ID.fetch_add(1, Ordering::Relaxed),
        grid: *grid,
        eigenvalues: values,
        vectors: flat,
        potential: potential.values.clone(),
    };
    let (res, defect) = basis.quality(&op);
    if res > 1e-8 || defect > 1e-10 {
        return Err(Error::Eigensolver(format!(
            "post-check failed: residual {res:.3e}, orthogonality defect {defect:.3e}"
        )));
    }
    Ok((op, basis))
}

/// Metric basis (`L_μ` or `L₊`) on a grid.
pub fn metric_basis(
    grid: &GridSpec,
    metric: MetricOperator,
    n_modes: usize,
) -> Result<(DiscreteOperator, SpectralBasis)> {
    let pot = crate::domain::build_potential(grid, &metric.potential_spec())?;
    assemble_and_decompose(grid, &pot, n_modes)
}

/// `L_μ^{-1}(ν L_μ w - L_μ(ν w))` with `ν = α - μ`, evaluated on the grid.
pub fn apply_p_grid(alpha: &PotentialField, w: &WaveField) -> Result<WaveField> {
    let grid = &alpha.grid;
    if w.grid != *grid {
        return invalid("field and potential grids differ");
    }
    let mu: Vec<f64> = grid.points().into_iter().map(weight_mu).collect();
    let nu: Vec<f64> = alpha.values.iter().zip(&mu).map(|(a, m)| a - m).collect();
    let l_mu = DiscreteOperator::new(grid, &mu)?;
    let lw = l_mu.apply(&w.values);
    let nw: Vec<C64> = w.values.iter().zip(&nu).map(|(v, n)| v * n).collect();
    let lnw = l_mu.apply(&nw);
    let comm: Vec<C64> = lw
        .iter()
        .zip(&nu)
        .zip(&lnw)
        .map(|((a, n), b)| a * n - b)
        .collect();
    WaveField::from_values(grid, l_mu.solve(&comm))
}

impl SpectralBasis {
    /// The commutator operator `P = L_μ^{-1}[ν, L_μ]`,
    /// for coefficient vectors of order 0 or 1.
    pub fn apply_p(&self, w: &WkVector, alpha: &PotentialField) -> Result<WkVector> {
        self.check(w)?;
        let k = w.order.get();
        if !(k == 0 || k == 1) {
            return Err(Error::OrderMismatch(format!("P acts on W^0 or W^1, got W^{k}")));
        }
        let grid_w = self.expand(w)?;
        let pw = apply_p_grid(alpha, &grid_w)?;
        self.project(&pw, w.order)
    }
}

/// `(‖u_x‖² + ‖u‖²_{L²_μ})^{1/2}` with central differences for `u_x`.
pub fn h_norm_direct(u: &WaveField, mu: &WeightField) -> f64 {
    let d = u.derivative_central();
    let dx = u.dx();
    let grad: f64 = d.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx;
    let mass: f64 = u
        .values
        .iter()
        .zip(&mu.values)
        .map(|(v, m)| m * v.norm_sqr())
        .sum::<f64>()
        * dx;
    (grad + mass).sqrt()
}
