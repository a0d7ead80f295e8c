use inertia_core::linalg::eigenvalues;
use inertia_core::linearization::*;
use inertia_core::plant::*;
use inertia_core::sim::integrate;
use inertia_core::Matrix;
use proptest::prelude::*;

fn params() -> PlantParameters {
    PlantParameters::reference_case()
}

#[test]
fn cp_respects_betz_bound() {
    for k in 0..10_000 {
        let lambda = 1.0 + 19.0 * k as f64 / 9_999.0;
        let cp = power_coefficient(lambda, 0.0);
        assert!(cp.is_finite());
        assert!(cp <= 16.0 / 27.0, "cp({lambda}) = {cp}");
    }
}

#[test]
fn reference_model_settles_at_droop_value() {
    let p = params().reference;
    let f = |_: f64, x: &[f64]| -> inertia_core::Result<Vec<f64>> {
        let s = ReferenceState { omega_hat: x[0], p_m_hat: x[1], p_v_hat: x[2] };
        Ok(reference_model_rhs(s, 0.3, &p).to_array().to_vec())
    };
    let (_, xs) = integrate(f, &[0.0; 3], 1e-3, 60.0).unwrap();
    let last = xs.last().unwrap()[0];
    assert!((last + p.r_r * 0.3).abs() < 1e-6, "{last}");
}

fn filter_equilibrium(f: &FilterParams, vgd: f64, vgq: f64) -> [f64; 2] {
    let r = f.r_f / f.l_f;
    let w = f.omega_grid;
    let cross = match f.coupling {
        FilterCoupling::Printed => w,
        FilterCoupling::Standard => -w,
    };
    let a = Matrix::from_rows(&[&[-r, w], &[cross, -r]]);
    let b = Matrix::column(&[(f.v_od - vgd) / f.l_f, (f.v_oq - vgq) / f.l_f]);
    let x = a.solve(&b).unwrap();
    [x[(0, 0)], x[(1, 0)]]
}

#[test]
fn filter_steady_state_matches_linear_solve() {
    let mut f = params().filter;
    f.coupling = FilterCoupling::Standard;
    let (vgd, vgq) = (401.0, 3.0);
    let ss = filter_equilibrium(&f, vgd, vgq);
    let rhs = |_: f64, x: &[f64]| -> inertia_core::Result<Vec<f64>> {
        let d = filter_rhs(FilterState { i_ld: x[0], i_lq: x[1] }, vgd, vgq, &f);
        Ok(vec![d.i_ld, d.i_lq])
    };
    let (_, xs) = integrate(rhs, &[0.0, 0.0], 1e-5, 2.0).unwrap();
    let end = xs.last().unwrap();
    for i in 0..2 {
        assert!((end[i] - ss[i]).abs() < 1e-6 * ss[i].abs().max(1.0), "{end:?} {ss:?}");
    }
}

#[test]
fn printed_filter_coupling_has_stationary_point() {
    let f = params().filter;
    assert_eq!(f.coupling, FilterCoupling::Printed);
    let ss = filter_equilibrium(&f, 401.0, 3.0);
    let d = filter_rhs(FilterState { i_ld: ss[0], i_lq: ss[1] }, 401.0, 3.0, &f);
    assert!(d.i_ld.abs() < 1e-6 && d.i_lq.abs() < 1e-6);
}

#[test]
fn equilibrium_is_stationary_and_on_mppt_curve() {
    let p = params();
    let eq = find_equilibrium(&p.wtg, 12.0, &default_initial_guess(&p.wtg, 12.0), &NewtonOptions::default()).unwrap();
    assert!(eq.residual <= 1e-10);
    let (d, alg) = wtg_derivative(&eq.x_eq, eq.u_eq, 12.0, &p.wtg).unwrap();
    assert!(d.to_array().iter().all(|v| v.abs() <= 1e-8), "{d:?}");
    let p_ref = wtg_power_reference(eq.x_eq.omega_m, &p.wtg);
    assert!((alg.p_gen() - p_ref).abs() <= 0.01 * p_ref);

    let again = find_equilibrium(&p.wtg, 12.0, &eq.x_eq, &NewtonOptions::default()).unwrap();
    assert!(again.iterations <= 1);

    let near = find_equilibrium(&p.wtg, 12.1, &eq.x_eq, &NewtonOptions::default()).unwrap();
    let dx: f64 = near.x_eq.to_array().iter().zip(eq.x_eq.to_array()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale: f64 = eq.x_eq.to_array().iter().map(|v| v.abs()).fold(0.0, f64::max);
    assert!(dx < 0.05 * scale, "jump {dx}");
}

#[test]
fn turbine_linear_model_is_hurwitz() {
    let p = params();
    let eq = find_equilibrium(&p.wtg, 12.0, &default_initial_guess(&p.wtg, 12.0), &NewtonOptions::default()).unwrap();
    let m = linearize_wtg(&p.wtg, &eq, &LinearizeOptions::default()).unwrap();
    assert!(eigenvalues(&m.a).unwrap().iter().all(|l| l.re < 0.0));
}

#[test]
fn linear_model_predicts_small_perturbations() {
    let p = params();
    let eq = find_equilibrium(&p.wtg, 12.0, &default_initial_guess(&p.wtg, 12.0), &NewtonOptions::default()).unwrap();
    let m = linearize_wtg(&p.wtg, &eq, &LinearizeOptions::default()).unwrap();
    let x0 = eq.x_eq.to_array();
    let mut delta = [0.0; 6];
    delta[2] = 1e-4;
    let start: Vec<f64> = x0.iter().zip(&delta).map(|(a, b)| a + b).collect();
    let nl = |_: f64, x: &[f64]| -> inertia_core::Result<Vec<f64>> { Ok(wtg_derivative(&WtgState::from_slice(x), eq.u_eq, 12.0, &p.wtg)?.0.to_array().to_vec()) };
    let (_, xs) = integrate(nl, &start, 1e-5, 0.5).unwrap();
    let lin = |_: f64, x: &[f64]| -> inertia_core::Result<Vec<f64>> { Ok(m.a.mul_vec(x)) };
    let (_, ls) = integrate(lin, &delta, 1e-5, 0.5).unwrap();
    let y_eq = eq.algebraics_eq.p_gen();
    for (k, (xn, xl)) in xs.iter().zip(&ls).enumerate().step_by(1000) {
        let (_, alg) = wtg_derivative(&WtgState::from_slice(xn), eq.u_eq, 12.0, &p.wtg).unwrap();
        let yn = alg.p_gen() - y_eq;
        let yl: f64 = (0..6).map(|i| m.c[(0, i)] * xl[i]).sum();
        let scale = m.c.max_abs();
        assert!((yn - yl).abs() <= 1e-2 * 1e-4 * scale, "k={k} {yn} {yl}");
    }
}

#[test]
fn jacobian_step_halving_is_second_order() {
    let f = |x: &[f64]| Ok(vec![x[0].sin() * x[1].exp(), x[0] * x[0] * x[1]]);
    let x = [0.7, -0.3];
    let exact = [[0.7f64.cos() * (-0.3f64).exp(), 0.7f64.sin() * (-0.3f64).exp()], [2.0 * 0.7 * -0.3, 0.49]];
    let err = |h: f64| {
        let j = jacobian(f, &x, &[h, h]).unwrap();
        (0..2).flat_map(|i| (0..2).map(move |k| (i, k))).map(|(i, k)| (j[(i, k)] - exact[i][k]).abs()).fold(0.0, f64::max)
    };
    let ratio = err(1e-2) / err(5e-3);
    assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn algebraic_solve_slope_matches_finite_difference() {
    let p = params();
    let eq = find_equilibrium(&p.wtg, 12.0, &default_initial_guess(&p.wtg, 12.0), &NewtonOptions::default()).unwrap();
    let p_ref = wtg_power_reference(eq.x_eq.omega_m, &p.wtg);
    let pe = |u: f64| msc_algebraic_solve(&eq.x_eq, u, p_ref, &p.wtg).unwrap().p_e;
    let h = 1.0;
    let slope = (pe(h) - pe(-h)) / (2.0 * h);
    let slope_half = (pe(h / 2.0) - pe(-h / 2.0)) / h;
    assert!((slope - slope_half).abs() < 1e-6 * slope.abs().max(1.0));
    assert!(slope.is_finite() && slope != 0.0);
}

fn wtg_state() -> impl Strategy<Value = WtgState> {
    (-50.0..50.0f64, -50.0..50.0f64, 20.0..150.0f64, -20.0..20.0f64, -50.0..50.0f64, -50.0..50.0f64).prop_map(
        |(i_sd, i_sq, omega_m, x1, x2, x3)| WtgState { i_sd, i_sq, omega_m, x1, x2, x3 },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn diesel_rhs_is_linear(a in -5.0..5.0f64, w in -1.0..1.0f64, p_ed in -1.0..1.0f64,
                            m in -0.5..0.5f64, v in -0.5..0.5f64) {
        let d = params().diesel;
        let x = DieselState::from_array([w, m, v]);
        let ax = DieselState::from_array([a * w, a * m, a * v]);
        let lhs = diesel_rhs(ax, a * p_ed, &d).unwrap().to_array();
        let rhs = diesel_rhs(x, p_ed, &d).unwrap().to_array();
        for i in 0..3 {
            prop_assert!((lhs[i] - a * rhs[i]).abs() <= 1e-12 * (1.0 + rhs[i].abs() * a.abs()));
        }
    }

    #[test]
    fn algebraic_rows_are_satisfied(s in wtg_state(), u in -5e3..5e3f64, p_ref in 0.0..5e4f64) {
        let p = params();
        match msc_algebraic_solve(&s, u, p_ref, &p.wtg) {
            Ok(alg) => {
                let r = msc_algebraic_residual(&s, &alg, u, p_ref, &p.wtg);
                let scale = 1.0f64.max(alg.p_e.abs()).max(alg.v_sd.abs()).max(alg.v_sq.abs());
                for v in r {
                    prop_assert!(v.abs() <= 1e-10 * scale, "{r:?}");
                }
                let identity = alg.p_e - 1.5 * (alg.v_sd * s.i_sd + alg.v_sq * s.i_sq);
                prop_assert!(identity.abs() <= 1e-10 * alg.p_e.abs().max(1.0));
            }
            Err(e) => prop_assert!(matches!(e, inertia_core::Error::Singular { .. }), "{e}"),
        }
    }

    #[test]
    fn mppt_is_cubic(w in 0.0..200.0f64, c in 0.0..10.0f64) {
        let v = mppt_reference(w, c);
        prop_assert!((v - c * w * w * w).abs() <= 1e-12 * v.abs().max(1.0));
    }
}
