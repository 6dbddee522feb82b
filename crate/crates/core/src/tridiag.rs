//! Tridiagonal linear algebra: Thomas solves, Sturm-sequence bisection,
//! inverse iteration and implicit QL for small symmetric matrices.

use crate::error::{Error, Result};
use crate::field::C64;

/// Symmetric tridiagonal matrix with constant or varying off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    /// `off[i]` couples rows `i` and `i+1`; length `diag.len() - 1`.
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len(), "off-diagonal length");
        Self { diag, off }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * x[i + 1];
            }
            y[i] = s;
        }
    }

    pub fn matvec_complex(&self, x: &[C64], y: &mut [C64]) {
        let n = self.len();
        for i in 0..n {
            let mut s = x[i] * self.diag[i];
            if i > 0 {
                s += x[i - 1] * self.off[i - 1];
            }
            if i + 1 < n {
                s += x[i + 1] * self.off[i];
            }
            y[i] = s;
        }
    }

    /// Gershgorin interval containing the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// Number of eigenvalues strictly below `sigma`.
    pub fn sturm_count(&self, sigma: f64) -> usize {
        let tiny = f64::MIN_POSITIVE.sqrt();
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..self.len() {
            let coupling = if i > 0 {
                self.off[i - 1] * self.off[i - 1] / q
            } else {
                0.0
            };
            q = self.diag[i] - sigma - coupling;
            if q.abs() < tiny {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `k`-th smallest eigenvalue (0-based) by bisection.
    pub fn eigenvalue_bisect(&self, k: usize) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        let scale = lo.abs().max(hi.abs());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= 4.0 * f64::EPSILON * scale || mid <= lo || mid >= hi {
                break;
            }
            if self.sturm_count(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Eigenvector for an accurate eigenvalue estimate by inverse iteration.
    /// Returned with unit Euclidean norm.
    pub fn inverse_iteration(&self, lambda: f64, start: &[f64]) -> Vec<f64> {
        let n = self.len();
        let (_, hi) = self.gershgorin();
        // perturb the shift off the exact eigenvalue so the factorization is regular
        let shift = lambda + 8.0 * f64::EPSILON * hi.abs().max(lambda.abs());
        let lu = PivotedTridiagLu::factor(&self.diag, &self.off, shift);
        let mut x = start.to_vec();
        for _ in 0..3 {
            lu.solve(&mut x);
            let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in &mut x {
                *v /= nrm;
            }
        }
        debug_assert_eq!(x.len(), n);
        x
    }
}

/// LU with partial pivoting of `T - shift·I` (LAPACK gttrf layout).
struct PivotedTridiagLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl PivotedTridiagLu {
    fn factor(diag: &[f64], off: &[f64], shift: f64) -> Self {
        let n = diag.len();
        let mut d: Vec<f64> = diag.iter().map(|v| v - shift).collect();
        let mut dl = off.to_vec();
        let mut du = off.to_vec();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        let tiny = f64::MIN_POSITIVE.sqrt() * 1e-3;
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = tiny;
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                swapped[i] = true;
            }
        }
        if n > 0 && d[n - 1] == 0.0 {
            d[n - 1] = tiny;
        }
        Self {
            dl,
            d,
            du,
            du2,
            swapped,
        }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = self.d.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}

/// Lowest `count` eigenpairs: bisection, inverse iteration, then modified
/// Gram-Schmidt. Vectors have unit Euclidean norm and a positive last
/// significant component.
pub fn lowest_eigenpairs(t: &SymTridiag, count: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = t.len();
    if count > n {
        return Err(Error::Eigensolver(format!(
            "requested {count} eigenpairs of a {n}x{n} matrix"
        )));
    }
    let values: Vec<f64> = (0..count).map(|k| t.eigenvalue_bisect(k)).collect();
    for w in values.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Eigensolver(format!(
                "eigenvalues not separated: {} and {}",
                w[0], w[1]
            )));
        }
    }
    // deterministic, non-symmetric start vector
    let start: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.5 * ((i as f64) * 0.618_033_988_75).fract())
        .collect();
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(count);
    for &lam in &values {
        let mut v = t.inverse_iteration(lam, &start);
        for _ in 0..2 {
            for u in &vectors {
                let p: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= p * ui;
                }
            }
            let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in &mut v {
                *x /= nrm;
            }
        }
        let vmax = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if let Some(last) = v.iter().rev().find(|x| x.abs() > 1e-6 * vmax) {
            if *last < 0.0 {
                for x in &mut v {
                    *x = -*x;
                }
            }
        }
        vectors.push(v);
    }
    Ok((values, vectors))
}

/// All eigenpairs of a small symmetric tridiagonal matrix by implicit QL.
/// Returns ascending eigenvalues and the matching orthonormal vectors.
pub fn ql_eigen(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n.saturating_sub(1)].copy_from_slice(&off[..n.saturating_sub(1)]);
    let mut z = vec![vec![0.0; n]; n];
    for (i, row) in z.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Eigensolver("QL iteration did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for row in z.iter_mut() {
                    let t = row[i + 1];
                    row[i + 1] = s * row[i] + c * t;
                    row[i] = c * row[i] - s * t;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    let values = order.iter().map(|&k| d[k]).collect();
    let vectors = order
        .iter()
        .map(|&k| z.iter().map(|row| row[k]).collect())
        .collect();
    Ok((values, vectors))
}

/// Solve a real tridiagonal system by the Thomas algorithm (no pivoting;
/// intended for diagonally dominant or SPD matrices).
pub fn thomas_real(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    rhs[0] /= beta;
    for i in 1..n {
        c[i] = sup[i - 1] / beta;
        beta = diag[i] - sub[i - 1] * c[i];
        rhs[i] = (rhs[i] - sub[i - 1] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i + 1] * rhs[i + 1];
    }
}

/// Prefactored complex tridiagonal solver for a fixed matrix with constant
/// off-diagonals `off` and diagonal `diag` (the CN left-hand side).
#[derive(Debug, Clone)]
pub struct ComplexThomas {
    off: C64,
    inv_beta: Vec<C64>,
    c: Vec<C64>,
}

impl ComplexThomas {
    pub fn new(diag: &[C64], off: C64) -> Self {
        let n = diag.len();
        let mut inv_beta = vec![C64::new(0.0, 0.0); n];
        let mut c = vec![C64::new(0.0, 0.0); n];
        let mut beta = diag[0];
        inv_beta[0] = 1.0 / beta;
        for i in 1..n {
            c[i] = off * inv_beta[i - 1];
            beta = diag[i] - off * c[i];
            inv_beta[i] = 1.0 / beta;
        }
        Self { off, inv_beta, c }
    }

    pub fn solve(&self, rhs: &mut [C64]) {
        let n = rhs.len();
        rhs[0] *= self.inv_beta[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.off * rhs[i - 1]) * self.inv_beta[i];
        }
        for i in (0..n - 1).rev() {
            let t = self.c[i + 1] * rhs[i + 1];
            rhs[i] -= t;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> SymTridiag {
        SymTridiag::new(vec![2.0; n], vec![-1.0; n - 1])
    }

    #[test]
    fn bisection_matches_closed_form() {
        let n = 50;
        let t = laplacian(n);
        for k in 0..10 {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((t.eigenvalue_bisect(k) - exact).abs() < 1e-13);
        }
        assert_eq!(t.sturm_count(-1.0), 0);
        assert_eq!(t.sturm_count(5.0), n);
    }

    #[test]
    fn inverse_iteration_vectors() {
        let n = 400;
        let diag: Vec<f64> = (0..n).map(|i| 2.0 + (i as f64 * 0.05 - 10.0).abs()).collect();
        let t = SymTridiag::new(diag, vec![-1.0; n - 1]);
        let (vals, vecs) = lowest_eigenpairs(&t, 40).unwrap();
        let mut y = vec![0.0; n];
        for (lam, v) in vals.iter().zip(&vecs) {
            t.matvec(v, &mut y);
            let r: f64 = y.iter().zip(v).map(|(a, b)| (a - lam * b).powi(2)).sum::<f64>().sqrt();
            assert!(r < 1e-10, "residual {r}");
        }
        for i in 0..vecs.len() {
            for j in 0..=i {
                let p: f64 = vecs[i].iter().zip(&vecs[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((p - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ql_agrees_with_bisection() {
        let n = 30;
        let diag: Vec<f64> = (0..n).map(|i| (i as f64).sin() * 3.0).collect();
        let off: Vec<f64> = (0..n - 1).map(|i| 0.5 + (i as f64 * 0.37).cos()).collect();
        let t = SymTridiag::new(diag.clone(), off.clone());
        let (vals, vecs) = ql_eigen(&diag, &off).unwrap();
        for k in 0..n {
            assert!((vals[k] - t.eigenvalue_bisect(k)).abs() < 1e-12);
        }
        let mut y = vec![0.0; n];
        t.matvec(&vecs[3], &mut y);
        for i in 0..n {
            assert!((y[i] - vals[3] * vecs[3][i]).abs() < 1e-12);
        }
    }

    #[test]
    fn thomas_solves() {
        let n = 20;
        let diag = vec![4.0; n];
        let off = vec![-1.0; n - 1];
        let x: Vec<f64> = (0..n).map(|i| i as f64 * 0.3 - 1.0).collect();
        let t = SymTridiag::new(diag.clone(), off.clone());
        let mut b = vec![0.0; n];
        t.matvec(&x, &mut b);
        thomas_real(&off, &diag, &off, &mut b);
        for i in 0..n {
            assert!((b[i] - x[i]).abs() < 1e-13);
        }
        let cd: Vec<C64> = (0..n).map(|i| C64::new(1.0, 0.2 * i as f64)).collect();
        let coff = C64::new(0.0, -0.7);
        let xs: Vec<C64> = (0..n).map(|i| C64::new(i as f64, 1.0)).collect();
        let mut rhs: Vec<C64> = (0..n)
            .map(|i| {
                let mut s = cd[i] * xs[i];
                if i > 0 {
                    s += coff * xs[i - 1];
                }
                if i + 1 < n {
                    s += coff * xs[i + 1];
                }
                s
            })
            .collect();
        ComplexThomas::new(&cd, coff).solve(&mut rhs);
        for i in 0..n {
            assert!((rhs[i] - xs[i]).norm() < 1e-12);
        }
    }
}
