//! Airy functions on the real line, their zeros, and the spectrum of
//! `-∂² + |x|` built from them.

use crate::domain::GridSpec;
use crate::error::{invalid, Error, Result};
use crate::field::{WaveField, C64};
use std::f64::consts::PI;

/// Ai(0)
pub const AI0: f64 = 0.355_028_053_887_817_2;
/// -Ai'(0)
pub const AIP0: f64 = 0.258_819_403_792_806_8;

/// Below this argument the oscillatory expansion is used.
const SERIES_LOW: f64 = -7.0;
/// Above this argument the exponential expansion is used.
const SERIES_HIGH: f64 = 6.0;
pub const MAX_ARG: f64 = 60.0;

/// Maclaurin series; accurate to ~1e-11 absolute on [-8, 7].
pub fn airy_series(x: f64) -> (f64, f64) {
    let x3 = x * x * x;
    let (mut f, mut g) = (1.0, x);
    let (mut tf, mut tg) = (1.0, x);
    let (mut df, mut dg) = (0.0, 1.0);
    let (mut sf, mut sg) = (x * x / 2.0, 1.0);
    df += sf;
    for k in 0..200 {
        let k3 = 3.0 * k as f64;
        tf *= x3 / ((k3 + 2.0) * (k3 + 3.0));
        tg *= x3 / ((k3 + 3.0) * (k3 + 4.0));
        f += tf;
        g += tg;
        if k >= 1 {
            sf *= x3 / (k3 * (k3 + 2.0));
            df += sf;
        }
        sg *= x3 / ((k3 + 1.0) * (k3 + 3.0));
        dg += sg;
        let scale = f.abs() + g.abs() + df.abs() + dg.abs() + 1.0;
        if k > 2 && (tf.abs() + tg.abs() + sf.abs() + sg.abs()) < 1e-18 * scale {
            break;
        }
    }
    (AI0 * f - AIP0 * g, AI0 * df - AIP0 * dg)
}

/// Coefficients u_k, v_k of the large-argument expansions.
fn asymptotic_coeffs(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut u = vec![1.0];
    let mut v = vec![1.0];
    for k in 1..n {
        let kf = k as f64;
        let prev = u[k - 1];
        let uk = prev * (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0)
            / ((2.0 * kf - 1.0) * 216.0 * kf);
        u.push(uk);
        v.push(-(6.0 * kf + 1.0) / (6.0 * kf - 1.0) * uk);
    }
    (u, v)
}

/// Alternating sum of `c_k ζ^{-k}` truncated at its smallest term; with
/// `parity` set, only indices of that parity, signs alternating within them.
fn truncated_sum(coef: &[f64], zeta: f64, parity: Option<usize>) -> f64 {
    let mut total = 0.0;
    let mut last = f64::INFINITY;
    for (k, c) in coef.iter().enumerate() {
        if let Some(p) = parity {
            if k % 2 != p {
                continue;
            }
        }
        let sign = match parity {
            Some(_) => {
                if (k / 2) % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            None => {
                if k % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        let term = c / zeta.powi(k as i32);
        if term.abs() > last {
            break;
        }
        last = term.abs();
        total += sign * term;
    }
    total
}

fn airy_asymptotic_pos(x: f64) -> (f64, f64) {
    let (u, v) = asymptotic_coeffs(40);
    let zeta = 2.0 / 3.0 * x.powf(1.5);
    let e = (-zeta).exp() / (2.0 * PI.sqrt());
    let q = x.powf(0.25);
    let ai = e / q * truncated_sum(&u, zeta, None);
    let aip = -e * q * truncated_sum(&v, zeta, None);
    (ai, aip)
}

fn airy_asymptotic_neg(x: f64) -> (f64, f64) {
    let (u, v) = asymptotic_coeffs(40);
    let r = -x;
    let zeta = 2.0 / 3.0 * r.powf(1.5);
    let theta = zeta + PI / 4.0;
    let (s, c) = theta.sin_cos();
    let q = r.powf(0.25);
    let pref = 1.0 / PI.sqrt();
    let ai = pref / q * (s * truncated_sum(&u, zeta, Some(0)) - c * truncated_sum(&u, zeta, Some(1)));
    let aip = -pref * q * (c * truncated_sum(&v, zeta, Some(0)) + s * truncated_sum(&v, zeta, Some(1)));
    (ai, aip)
}

/// `(Ai(x), Ai'(x))` for `|x| <= 60`, absolute error below 1e-10.
pub fn airy_eval(x: f64) -> Result<(f64, f64)> {
    if !x.is_finite() || x.abs() > MAX_ARG {
        return invalid(format!("airy argument {x} outside [-{MAX_ARG}, {MAX_ARG}]"));
    }
    Ok(airy_unchecked(x))
}

pub(crate) fn airy_unchecked(x: f64) -> (f64, f64) {
    if x < SERIES_LOW {
        airy_asymptotic_neg(x)
    } else if x > SERIES_HIGH {
        airy_asymptotic_pos(x)
    } else {
        airy_series(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AiryKind {
    /// zeros of Ai(-x)
    Ai,
    /// zeros of Ai'(-x)
    AiPrime,
}

impl AiryKind {
    fn label(self) -> &'static str {
        match self {
            AiryKind::Ai => "Ai",
            AiryKind::AiPrime => "Ai'",
        }
    }

    /// Function whose positive roots are sought, and its derivative.
    fn target(self, x: f64) -> (f64, f64) {
        let (ai, aip) = airy_unchecked(-x);
        match self {
            AiryKind::Ai => (ai, -aip),
            // d/dx Ai'(-x) = -Ai''(-x) = x·Ai(-x)
            AiryKind::AiPrime => (aip, x * ai),
        }
    }
}

fn seed(kind: AiryKind, n: usize) -> f64 {
    let nf = n as f64;
    match kind {
        AiryKind::Ai => {
            let t = 3.0 * PI * (4.0 * nf + 3.0) / 8.0;
            let t2 = t.powi(-2);
            t.powf(2.0 / 3.0) * (1.0 + t2 * (5.0 / 48.0 - t2 * (5.0 / 36.0)))
        }
        AiryKind::AiPrime => {
            let t = 3.0 * PI * (4.0 * nf + 1.0) / 8.0;
            let t2 = t.powi(-2);
            t.powf(2.0 / 3.0) * (1.0 - t2 * (7.0 / 48.0 - t2 * (35.0 / 288.0)))
        }
    }
}

/// The (n+1)-th positive zero of Ai(-x) or Ai'(-x), to 1e-9 or better.
pub fn airy_zero(kind: AiryKind, n: usize) -> Result<f64> {
    let fail = |reason: String| Error::AiryZero {
        kind: kind.label(),
        index: n,
        reason,
    };
    let x0 = seed(kind, n);
    // Consecutive zeros are about π/√x apart; stay within a third of that.
    let half = PI / x0.sqrt() / 3.0;
    let (lo, hi) = (x0 - half, x0 + half);
    let mut x = x0;
    let mut newton_ok = false;
    for _ in 0..50 {
        let (f, df) = kind.target(x);
        if df == 0.0 {
            break;
        }
        let step = f / df;
        x -= step;
        if !(lo..=hi).contains(&x) {
            break;
        }
        if step.abs() < 1e-14 * x.abs().max(1.0) {
            newton_ok = true;
            break;
        }
    }
    if !newton_ok {
        let (mut a, mut b) = (lo, hi);
        let (fa, fb) = (kind.target(a).0, kind.target(b).0);
        if fa * fb > 0.0 {
            return Err(fail(format!("no sign change on [{a}, {b}]")));
        }
        let mut fa = fa;
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            let fm = kind.target(m).0;
            if fm == 0.0 || b - a < 1e-15 * m {
                a = m;
                b = m;
                break;
            }
            if fa * fm < 0.0 {
                b = m;
            } else {
                a = m;
                fa = fm;
            }
        }
        x = 0.5 * (a + b);
    }
    // Confirm by a sign change in a small bracket.
    let h = 1e-9_f64.max(1e-12 * x);
    let (fl, fr) = (kind.target(x - h).0, kind.target(x + h).0);
    if fl * fr > 0.0 && kind.target(x).0 != 0.0 {
        return Err(fail(format!("no sign change around {x}")));
    }
    Ok(x)
}

/// First `count` eigenvalues of `-∂² + |x|` on the line, interleaving
/// zeros of Ai'(-x) (even modes) and Ai(-x) (odd modes).
pub fn eigenvalues(count: usize) -> Result<Vec<f64>> {
    (0..count).map(eigenvalue).collect()
}

pub fn eigenvalue(index: usize) -> Result<f64> {
    if index.is_multiple_of(2) {
        airy_zero(AiryKind::AiPrime, index / 2)
    } else {
        airy_zero(AiryKind::Ai, index / 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AiryEigenpair {
    pub index: usize,
    pub eigenvalue: f64,
    pub parity: Parity,
    /// Trapezoid-rule normalization constant on the working grid.
    pub norm_const: f64,
}

/// Analytic mode profile `Ai(|x| - λ)` (times `sgn x` for odd modes) and its derivative.
fn mode_profile(parity: Parity, lambda: f64, x: f64) -> (f64, f64) {
    let arg = (x.abs() - lambda).min(MAX_ARG);
    let (ai, aip) = airy_unchecked(arg);
    let s = if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    };
    match parity {
        Parity::Even => (ai, s * aip),
        Parity::Odd => (s * ai, aip),
    }
}

/// The N-th normalized eigenfunction of `-∂² + |x|` sampled on the grid.
pub fn eigenpair(index: usize, grid: &GridSpec) -> Result<(AiryEigenpair, WaveField)> {
    let lambda = eigenvalue(index)?;
    if grid.dx() > 0.25 / lambda.sqrt() {
        return invalid(format!(
            "grid spacing {} does not resolve mode {index} (need dx <= {})",
            grid.dx(),
            0.25 / lambda.sqrt()
        ));
    }
    let parity = if index.is_multiple_of(2) { Parity::Even } else { Parity::Odd };
    let raw: Vec<f64> = grid
        .points()
        .into_iter()
        .map(|x| mode_profile(parity, lambda, x).0)
        .collect();
    let mut field = WaveField::from_real(grid, &raw)?;
    field.clamp_ends();
    let c = 1.0 / field.norm_l2();
    field.scale(C64::new(c, 0.0));
    Ok((
        AiryEigenpair {
            index,
            eigenvalue: lambda,
            parity,
            norm_const: c,
        },
        field,
    ))
}

/// Analytic derivative of the normalized mode on the grid.
pub fn eigenfunction_derivative(pair: &AiryEigenpair, grid: &GridSpec) -> Vec<f64> {
    grid.points()
        .into_iter()
        .map(|x| pair.norm_const * mode_profile(pair.parity, pair.eigenvalue, x).1)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadiationRow {
    pub index: usize,
    pub eigenvalue: f64,
    /// `λ_N^{-1/4} ∫_Ω |φ_N'|²`
    pub scaled: f64,
    pub running_max: f64,
    /// `‖φ_N'‖_{L²(Ω)}`
    pub grad_norm: f64,
    /// `max |φ_N| / λ_N^{1/4}`
    pub sup_ratio: f64,
}

/// `λ_N^{-1/4}∫_Ω|φ_N'|²` for `N <= n_max`, with its running maximum.
pub fn radiation_bound_check(
    n_max: usize,
    omega: (f64, f64),
    grid: &GridSpec,
) -> Result<Vec<RadiationRow>> {
    let (a, b) = omega;
    if !(a < b && a >= -grid.half_width() && b <= grid.half_width()) {
        return invalid(format!("interval [{a}, {b}] not inside the grid box"));
    }
    let pts = grid.points();
    let dx = grid.dx();
    let mut rows = Vec::with_capacity(n_max + 1);
    let mut running = 0.0_f64;
    for n in 0..=n_max {
        let (pair, field) = eigenpair(n, grid)?;
        let d = eigenfunction_derivative(&pair, grid);
        let mut integral = 0.0;
        for (j, x) in pts.iter().enumerate() {
            if *x < a - 1e-12 || *x > b + 1e-12 {
                continue;
            }
            let w = if (x - a).abs() < 1e-12 || (x - b).abs() < 1e-12 {
                0.5
            } else {
                1.0
            };
            integral += w * d[j] * d[j];
        }
        integral *= dx;
        let scaled = integral / pair.eigenvalue.powf(0.25);
        running = running.max(scaled);
        rows.push(RadiationRow {
            index: n,
            eigenvalue: pair.eigenvalue,
            scaled,
            running_max: running,
            grad_norm: integral.sqrt(),
            sup_ratio: field.norm_linf() / pair.eigenvalue.powf(0.25),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: Ai via 60-digit-free Taylor integration of Ai'' = x Ai
    /// from the exact values at 0, with a fine RK4 step.
    fn ode_oracle(x_end: f64) -> (f64, f64) {
        let n = 20000;
        let h = x_end / n as f64;
        let (mut y, mut yp, mut x) = (AI0, -AIP0, 0.0);
        let f = |x: f64, y: f64, yp: f64| (yp, x * y);
        for _ in 0..n {
            let (k1a, k1b) = f(x, y, yp);
            let (k2a, k2b) = f(x + h / 2.0, y + h / 2.0 * k1a, yp + h / 2.0 * k1b);
            let (k3a, k3b) = f(x + h / 2.0, y + h / 2.0 * k2a, yp + h / 2.0 * k2b);
            let (k4a, k4b) = f(x + h, y + h * k3a, yp + h * k3b);
            y += h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
            yp += h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
            x += h;
        }
        (y, yp)
    }

    #[test]
    fn values_at_zero() {
        let (a, ap) = airy_eval(0.0).unwrap();
        assert!((a - 0.355_028_053_887_817).abs() < 1e-14);
        assert!((ap + 0.258_819_403_792_807).abs() < 1e-14);
    }

    #[test]
    fn series_matches_ode_integration() {
        for &x in &[-6.5, -4.0, -1.3, 1.7, 3.0] {
            let (a, ap) = airy_series(x);
            let (o, op) = ode_oracle(x);
            println!("x={x} Ai={a:.15e} ode={o:.15e}");
            assert!((a - o).abs() < 1e-10, "x={x}");
            assert!((ap - op).abs() < 1e-10, "x={x}");
        }
    }

    #[test]
    fn overlap_windows_agree() {
        // negative side: series and oscillatory expansion both valid on [-8, -7]
        for i in 0..=20 {
            let x = -8.0 + 0.05 * i as f64;
            let (a, ap) = airy_series(x);
            let (b, bp) = airy_asymptotic_neg(x);
            assert!((a - b).abs() < 1e-10, "x={x} {a} {b}");
            assert!((ap - bp).abs() < 1e-10, "x={x}");
        }
        // positive side: the series drifts past the switch point, so compare on [5, 6]
        for i in 0..=10 {
            let x = 5.0 + 0.1 * i as f64;
            let (a, ap) = airy_series(x);
            let (b, bp) = airy_asymptotic_pos(x);
            assert!((a - b).abs() < 1e-11, "x={x} {a} {b}");
            assert!((ap - bp).abs() < 1e-11, "x={x} {ap} {bp}");
        }
    }

    #[test]
    fn decay_and_range() {
        let (a, _) = airy_eval(10.0).unwrap();
        assert!(a > 0.0 && a < (-(2.0 / 3.0) * 10f64.powf(1.5)).exp());
        assert!(airy_eval(60.5).is_err());
        assert!(airy_eval(f64::NAN).is_err());
    }

    #[test]
    fn first_zeros() {
        let a0 = airy_zero(AiryKind::Ai, 0).unwrap();
        let b0 = airy_zero(AiryKind::AiPrime, 0).unwrap();
        // bisection on the series, independently of Newton
        let bisect = |f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64| {
            for _ in 0..100 {
                let m = 0.5 * (lo + hi);
                if f(lo) * f(m) <= 0.0 {
                    hi = m
                } else {
                    lo = m
                }
            }
            0.5 * (lo + hi)
        };
        let a_ref = bisect(&|x| airy_series(-x).0, 2.0, 2.6);
        let b_ref = bisect(&|x| airy_series(-x).1, 0.8, 1.3);
        println!("a0={a0:.12} ref={a_ref:.12}; b0={b0:.12} ref={b_ref:.12}");
        assert!((a0 - a_ref).abs() < 1e-10 && (a0 - 2.338_107_410_46).abs() < 1e-9);
        assert!((b0 - b_ref).abs() < 1e-10 && (b0 - 1.018_792_971_65).abs() < 1e-9);
    }

    #[test]
    fn interleaving_and_asymptotics() {
        let lam = eigenvalues(201).unwrap();
        for w in lam.windows(2) {
            assert!(w[0] < w[1]);
        }
        for n in [50usize, 80, 100] {
            let a = airy_zero(AiryKind::Ai, n).unwrap();
            let t = 3.0 * PI * (4.0 * n as f64 + 3.0) / 8.0;
            assert!((a / t.powf(2.0 / 3.0) - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn modes_orthonormal_on_grid() {
        let g = GridSpec::with_spacing(30.0, 0.01).unwrap();
        let modes: Vec<_> = (0..=20).map(|n| eigenpair(n, &g).unwrap()).collect();
        assert!((modes[0].0.eigenvalue - 1.018_792_971_65).abs() < 1e-9);
        assert_eq!(modes[1].0.parity, Parity::Odd);
        assert_eq!(modes[1].1.values[g.center()].norm(), 0.0);
        let mut worst = 0.0_f64;
        for i in 0..modes.len() {
            for j in 0..=i {
                let ip = modes[i].1.inner(&modes[j].1).norm();
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((ip - want).abs());
            }
        }
        println!("max orthonormality defect {worst:.3e}");
        assert!(worst < 1e-6);
    }

    #[test]
    fn eigen_residual_is_second_order() {
        let mut prev = None;
        for &dx in &[0.02, 0.01] {
            let g = GridSpec::with_spacing(30.0, dx).unwrap();
            let mut worst = 0.0_f64;
            for n in 0..=20 {
                let (pair, f) = eigenpair(n, &g).unwrap();
                let u = &f.values;
                let mut r2 = 0.0;
                for j in 1..u.len() - 1 {
                    let x = g.x(j);
                    if x.abs() < 2.0 * dx {
                        continue;
                    }
                    let lap = (u[j + 1] - 2.0 * u[j] + u[j - 1]) / (dx * dx);
                    r2 += (-lap + x.abs() * u[j] - pair.eigenvalue * u[j]).norm_sqr();
                }
                worst = worst.max((r2 * dx).sqrt());
            }
            println!("dx={dx} worst residual {worst:.3e}");
            if let Some(p) = prev {
                let ratio: f64 = p / worst;
                assert!(ratio > 3.5 && ratio < 4.5);
            }
            prev = Some(worst);
        }
    }

    #[test]
    fn under_resolved_grid_rejected() {
        let g = GridSpec::with_spacing(30.0, 0.3).unwrap();
        assert!(eigenpair(5, &g).is_err());
    }

    #[test]
    fn derivative_growth_bound() {
        let mut c: f64 = 0.0;
        for i in 0..5800 {
            let r = 2.0 + 0.01 * i as f64;
            let (_, ap) = airy_eval(-r).unwrap();
            c = c.max(ap.abs() / r.powf(0.25));
        }
        println!("max |Ai'(-r)|/r^(1/4) on [2,60] = {c:.6}");
        assert!(c <= 0.8);
    }
}
