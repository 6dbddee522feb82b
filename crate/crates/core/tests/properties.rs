use hartree_control::config::RunConfig;
use hartree_control::domain::{
    build_cutoff, build_potential, cutoff_profile, weight_mu, CutoffKind, GridSpec, PotentialSpec,
};
use hartree_control::hartree::{HartreeKernel, KernelSpec};
use hartree_control::hum::{solve_control_for, LinearControlProblem, SOperator};
use hartree_control::io::format_float;
use hartree_control::propagate::{AvronHerbst, CrankNicolson};
use hartree_control::spectral::{assemble_and_decompose, RieszPower, SobolevOrder};
use hartree_control::{WaveField, C64};
use proptest::prelude::*;
use std::sync::{Arc, OnceLock};

fn grid() -> GridSpec {
    GridSpec::with_spacing(10.0, 0.05).unwrap()
}

fn packet() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (-3.0..3.0f64, 0.4..1.5f64, -2.0..2.0f64, 0.1..2.0f64)
}

fn control_problem() -> &'static LinearControlProblem {
    static P: OnceLock<LinearControlProblem> = OnceLock::new();
    P.get_or_init(|| {
        let g = GridSpec::with_spacing(8.0, 0.1).unwrap();
        let mu = build_potential(&g, &PotentialSpec::WeightMu).unwrap();
        let (_, basis) = assemble_and_decompose(&g, &mu, 32).unwrap();
        LinearControlProblem {
            u0: WaveField::gaussian(&g, 1.0, -1.0, 1.0, 0.0),
            target: WaveField::gaussian(&g, 1.0, 1.0, 1.0, 0.0),
            horizon: 0.5,
            cutoff: build_cutoff(&g, CutoffKind::Exterior, 2.0).unwrap(),
            potential: mu,
            dt: 1e-2,
            basis: Arc::new(basis),
            cg_tol: 1e-12,
            cg_max_iter: 500,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weight_is_even_above_one_and_abs_outside(x in -50.0..50.0f64) {
        let m = weight_mu(x);
        prop_assert!(m >= 1.0);
        prop_assert_eq!(m, weight_mu(-x));
        if x.abs() >= 2.0 {
            prop_assert_eq!(m, x.abs());
        }
    }

    #[test]
    fn cutoffs_take_their_plateau_values(x in -12.0..12.0f64, r in 0.5..4.0f64) {
        let a = x.abs();
        let (ext, _, _) = cutoff_profile(CutoffKind::Exterior, r, x);
        let (int, _, _) = cutoff_profile(CutoffKind::Interior, r, x);
        let (q, _, _) = cutoff_profile(CutoffKind::MultiplierQ, r, x);
        prop_assert!((0.0..=1.0).contains(&ext) && (0.0..=1.0).contains(&int));
        if a <= r { prop_assert_eq!(ext, 0.0); }
        if a >= r + 1.0 { prop_assert_eq!(ext, 1.0); }
        if a <= r + 1.0 { prop_assert_eq!(int, 1.0); }
        if a >= r + 2.0 { prop_assert_eq!(int, 0.0); }
        if a <= r + 2.0 { prop_assert_eq!(q, x); }
        if a >= r + 3.0 { prop_assert_eq!(q, 0.0); }
    }

    #[test]
    fn crank_nicolson_keeps_mass((c, w, k, _) in packet(), dt in 1e-4..5e-2f64) {
        let g = grid();
        let mu = build_potential(&g, &PotentialSpec::WeightMu).unwrap();
        let cn = CrankNicolson::from_potential(&mu, dt).unwrap();
        let u0 = WaveField::gaussian(&g, 1.0, c, w, k);
        let traj = cn.evolve(&u0, 50);
        let m0 = u0.norm_l2().powi(2);
        for f in &traj.fields {
            prop_assert!((f.norm_l2().powi(2) - m0).abs() <= 1e-12 * m0);
        }
    }

    #[test]
    fn avron_herbst_translates_by_t_squared(t in 0.1..1.5f64) {
        let g = GridSpec::with_spacing(30.0, 0.05).unwrap();
        let f = WaveField::gaussian(&g, 1.0, 0.0, 1.0, 0.0);
        let moved = AvronHerbst::new(&g, 1.0).apply(&f, t).unwrap();
        let pts = g.points();
        let mass: f64 = moved.values.iter().map(|z| z.norm_sqr()).sum();
        let center: f64 = moved.values.iter().zip(&pts).map(|(z, x)| x * z.norm_sqr()).sum::<f64>() / mass;
        prop_assert!((center - t * t).abs() < 1e-6, "{center} vs {}", t * t);
        prop_assert!((moved.norm_l2() - f.norm_l2()).abs() < 1e-10);
    }

    #[test]
    fn hartree_potential_is_dominated_by_weighted_mass((c, w, k, a) in packet()) {
        let g = grid();
        let kernel = HartreeKernel::build(&g, KernelSpec::PoissonSplit).unwrap();
        let phi = WaveField::gaussian(&g, a, c, w, k);
        let m = kernel.m_of(&phi).unwrap();
        let sup = m.iter().fold(0.0_f64, |s, v| s.max(v.abs()));
        let weighted = phi.norm_weighted(kernel.weight()).powi(2);
        prop_assert!(sup <= weighted * (1.0 + 1e-12), "{sup} > {weighted}");
        let direct = kernel.m_of_direct(&phi).unwrap();
        let gap = m.iter().zip(&direct).fold(0.0_f64, |s, (x, y)| s.max((x - y).abs()));
        prop_assert!(gap <= 1e-10 * sup.max(1.0));
    }

    #[test]
    fn riesz_map_is_an_isometry(k in -1i8..=2, seed in any::<u64>()) {
        let g = GridSpec::with_spacing(8.0, 0.1).unwrap();
        let abs = build_potential(&g, &PotentialSpec::AbsValue).unwrap();
        let (_, basis) = assemble_and_decompose(&g, &abs, 24).unwrap();
        let mut s = seed;
        let coeffs: Vec<C64> = (0..24)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                C64::new((s >> 11) as f64 / (1u64 << 53) as f64 - 0.5, (s >> 40) as f64 / (1u64 << 24) as f64 - 0.5)
            })
            .collect();
        let u = basis.wrap(coeffs, SobolevOrder::new(k).unwrap());
        let lu = basis.riesz_and_powers(&u, RieszPower::Full).unwrap();
        let lhs = basis.wk_norm(&lu, k - 2).unwrap();
        let rhs = basis.wk_norm(&u, k).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs);
    }

    #[test]
    fn floats_survive_the_csv_format(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn config_round_trips(
        half_width in 6.0..30.0f64,
        (half_points, modes) in (20usize..500).prop_flat_map(|h| (Just(h), 8..=2 * h - 1)),
        steps in 50usize..1500,
        seed in 0..=i64::MAX as u64,
    ) {
        let mut c = RunConfig::default();
        c.grid.half_width = half_width;
        c.grid.n_points = 2 * half_points + 1;
        c.solver.n_modes = modes;
        c.basis.n = c.basis.n.min(modes);
        c.time.horizon = steps as f64 * c.time.dt;
        c.seed = seed;
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        prop_assert_eq!(back, c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn control_is_linear_in_the_data(a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let p = control_problem();
        let op = SOperator::new(p).unwrap();
        let z = C64::new(a, b);
        let base = solve_control_for(&op, &p.u0, &p.target).unwrap();
        let scaled = solve_control_for(&op, &p.u0.scaled(z), &p.target.scaled(z)).unwrap();
        let size = base.v0_opt.coeffs.iter().fold(0.0_f64, |s, c| s.max(c.norm()));
        for (x, y) in scaled.v0_opt.coeffs.iter().zip(&base.v0_opt.coeffs) {
            prop_assert!((x - y * z).norm() <= 1e-8 * size * z.norm().max(1.0));
        }
        prop_assert!((scaled.cost - base.cost * z.norm()).abs() <= 1e-8 * base.cost * z.norm().max(1.0));
    }

    #[test]
    fn controlled_state_starts_at_the_data((c, w, k, amp) in packet()) {
        let p = control_problem();
        let op = SOperator::new(p).unwrap();
        let u0 = WaveField::gaussian(&p.u0.grid, amp, c, w, k);
        let sol = solve_control_for(&op, &u0, &p.target).unwrap();
        prop_assert_eq!(sol.u.first(), &u0);
        prop_assert!(sol.relative_target_error < 1e-6);
    }
}
