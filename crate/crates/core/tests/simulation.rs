use std::sync::OnceLock;

use inertia_core::linalg::expm;
use inertia_core::linearization::{default_initial_guess, find_equilibrium, NewtonOptions};
use inertia_core::mrc::*;
use inertia_core::plant::PlantParameters;
use inertia_core::sim::*;
use inertia_core::sma::{reduce_turbine, TurbineReductionOptions};
use inertia_core::Matrix;

const PUBLISHED_GAIN: [f64; 7] = [-15.22, 3.90, 3.89, 9.21, 13.85, -7.90, -3.37];

fn models() -> &'static SimModels {
    static M: OnceLock<SimModels> = OnceLock::new();
    M.get_or_init(|| {
        let params = PlantParameters::reference_case();
        let red = reduce_turbine(&params, &TurbineReductionOptions::default()).unwrap();
        SimModels { params, reduced: red.reduction.reduced, equilibrium: Some(red.equilibrium) }
    })
}

fn augmented() -> AugmentedSystem {
    let m = models();
    let plant = assemble_plant(&m.params.diesel, &m.reduced, &m.params.base).unwrap();
    augment(&plant, &assemble_reference(&m.params.reference), DisturbanceChannel::Shared).unwrap()
}

fn decay_error(dt: f64) -> f64 {
    let (_, xs) = integrate(|_, x: &[f64]| Ok(vec![-x[0]]), &[1.0], dt, 1.0).unwrap();
    (xs.last().unwrap()[0] - (-1.0f64).exp()).abs()
}

#[test]
fn rk4_matches_exponential_with_fourth_order_convergence() {
    assert!(decay_error(0.01) < 1e-9);
    let ratio = decay_error(0.02) / decay_error(0.01);
    assert!((ratio - 16.0).abs() < 0.5, "{ratio}");
}

#[test]
fn zero_dynamics_stay_constant() {
    let (ts, xs) = integrate(|_, _: &[f64]| Ok(vec![0.0, 0.0]), &[1.5, -2.0], 0.1, 2.0).unwrap();
    assert_eq!(ts.len(), 21);
    assert!(xs.iter().all(|x| x == &[1.5, -2.0]));
}

#[test]
fn open_loop_trajectory_matches_matrix_exponential() {
    let aug = augmented();
    let scenario = Scenario::step("open", 0.3, Controller::None);
    let traj = run_scenario(&scenario, models()).unwrap();
    // [x; w]' = [[A, E], [0, 0]] [x; w]
    let n = aug.n();
    let mut big = Matrix::zeros(n + 1, n + 1);
    big.set_submatrix(0, 0, &aug.a_bar);
    big.set_submatrix(0, n, &aug.e_bar);
    let mut x0 = vec![0.0; n + 1];
    x0[n] = 0.3;
    for k in [1, 50, 100, 1000, 5000, 10_000] {
        let x = expm(&big.scale(traj.time[k])).unwrap().mul_vec(&x0);
        assert!((traj.d_omega_d[k] - x[0]).abs() < 1e-6, "t={}", traj.time[k]);
        assert!((traj.omega_hat[k] - x[4]).abs() < 1e-6, "t={}", traj.time[k]);
    }
}

#[test]
fn zero_disturbance_gives_zero_channels_and_no_estimates() {
    let mut s = Scenario::step("quiet", 0.0, Controller::Mrc { gains: GainPair::from_slice(&PUBLISHED_GAIN).unwrap(), delay: 1e-3 });
    s.duration = 2.0;
    let traj = run_scenario(&s, models()).unwrap();
    for ch in &traj.columns()[1..] {
        assert!(ch.iter().all(|v| *v == 0.0));
    }
    let m = compute_metrics(&traj, &s).unwrap();
    assert_eq!((m.nadir, m.rocof, m.tracking_peak), (0.0, 0.0, 0.0));
    assert!(m.h_est.is_none() && m.l2_gain.is_none());
}

#[test]
fn power_balance_holds_at_every_sample() {
    let s = Scenario::step("balance", 0.3, Controller::Washout { k_w: 0.2, time_constant: 0.005 });
    let traj = run_scenario(&s, models()).unwrap();
    for k in 0..traj.len() {
        assert!((traj.p_ed[k] - (traj.p_l[k] - traj.p_gen[k])).abs() < 1e-14);
    }
}

#[test]
fn reference_and_diesel_inertia_estimates() {
    let s = Scenario::step("diesel", 0.3, Controller::None);
    let traj = run_scenario(&s, models()).unwrap();
    let m = compute_metrics(&traj, &s).unwrap();
    let n = traj.time.iter().position(|t| *t > 0.1 + 1e-9).unwrap();
    let slope = ls_slope(&traj.time[..n], &traj.omega_hat[..n]);
    let h_ref = 0.3 / (2.0 * slope.abs());
    println!("reference H {h_ref:.4}, diesel H {:.4}", m.h_est.unwrap());
    assert!((h_ref - 3.0).abs() <= 0.05 * 3.0);
    assert!((m.h_est.unwrap() - 2.0).abs() <= 0.1 * 2.0);
}

#[test]
fn reference_frequency_settles_at_droop_value() {
    let mut s = Scenario::step("ref", 0.3, Controller::None);
    s.duration = 40.0;
    let traj = run_scenario(&s, models()).unwrap();
    let expect = -models().params.reference.r_r * 0.3;
    assert!((traj.omega_hat.last().unwrap() - expect).abs() < 1e-6);
}

#[test]
fn washout_behaviour() {
    let run = |c| {
        let mut s = Scenario::step("w", 0.3, c);
        s.duration = 40.0;
        run_scenario(&s, models()).unwrap()
    };
    let none = run(Controller::None);
    let off = run(Controller::Washout { k_w: 0.0, time_constant: 0.005 });
    let on = run(Controller::Washout { k_w: 0.2, time_constant: 0.005 });
    assert!(off.u_ie.iter().all(|u| *u == 0.0));
    assert_eq!(off.d_omega_d, none.d_omega_d);

    let d_on = rms_distance(&on.d_omega_d, &on.omega_hat).unwrap();
    let d_off = rms_distance(&off.d_omega_d, &off.omega_hat).unwrap();
    assert!(d_on < d_off, "{d_on} {d_off}");

    let droop = -models().params.diesel.r_d * 0.3;
    assert!(on.u_ie.last().unwrap().abs() < 1e-6);
    assert!((on.d_omega_d.last().unwrap() - droop).abs() < 1e-6);
}

#[test]
fn published_gain_is_stabilizing_in_simulation() {
    let s = Scenario::step("published", 0.3, Controller::Mrc { gains: GainPair::from_slice(&PUBLISHED_GAIN).unwrap(), delay: 1e-3 });
    let traj = run_scenario(&s, models()).unwrap();
    let m = compute_metrics(&traj, &s).unwrap();
    println!("published gain: peak tracking error {:.3} of reference nadir", m.tracking_peak_relative);
    let tail = &traj.d_omega_d[traj.len() - 100..];
    assert!(tail.iter().all(|v| (v - m.steady_state).abs() < 1e-4));
}

#[test]
fn nonlinear_mode_approaches_linear_mode_for_small_steps() {
    let m = models();
    assert!(m.equilibrium.is_some());
    let run = |mag: f64, fidelity| {
        let mut s = Scenario::step("nl", mag, Controller::Washout { k_w: 0.2, time_constant: 0.005 });
        s.duration = 3.0;
        s.dt = 1e-4;
        s.fidelity = fidelity;
        run_scenario(&s, m).unwrap().d_omega_d.iter().map(|v| v / mag).collect::<Vec<_>>()
    };
    let lin = run(0.03, Fidelity::Linear);
    let nl: Vec<_> = [0.03, 0.003, 3e-4].into_iter().map(|mag| run(mag, Fidelity::Nonlinear)).collect();
    let scale = rms_distance(&lin, &vec![0.0; lin.len()]).unwrap();
    // Normalized responses differ from the reduced linear model only by the reduction error ...
    for r in &nl {
        assert!(rms_distance(r, &lin).unwrap() <= 0.02 * scale);
    }
    // ... while the nonlinear part shrinks in proportion to the step size.
    let coarse = rms_distance(&nl[0], &nl[1]).unwrap();
    let fine = rms_distance(&nl[1], &nl[2]).unwrap();
    println!("nonlinear residual {coarse:.3e} -> {fine:.3e}");
    assert!((coarse / fine - 10.0).abs() < 1.0, "{}", coarse / fine);
}

#[test]
fn equilibrium_is_reused_not_recomputed() {
    let p = PlantParameters::reference_case();
    let eq = find_equilibrium(&p.wtg, 12.0, &default_initial_guess(&p.wtg, 12.0), &NewtonOptions::default()).unwrap();
    assert_eq!(models().equilibrium.as_ref().unwrap().x_eq, eq.x_eq);
}
