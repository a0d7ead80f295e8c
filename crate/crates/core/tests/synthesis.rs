use std::sync::OnceLock;

use inertia_core::linalg::expm;
use inertia_core::mrc::*;
use inertia_core::plant::PlantParameters;
use inertia_core::sim::*;
use inertia_core::sma::{reduce_turbine, ReducedWtgModel, TurbineReductionOptions};
use inertia_core::Matrix;

const PUBLISHED_GAIN: [f64; 7] = [-15.22, 3.90, 3.89, 9.21, 13.85, -7.90, -3.37];

struct Fixture {
    params: PlantParameters,
    reduced: ReducedWtgModel,
    aug: AugmentedSystem,
    synthesis: Synthesis,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let params = PlantParameters::reference_case();
        let reduced = reduce_turbine(&params, &TurbineReductionOptions::default()).unwrap().reduction.reduced;
        let plant = assemble_plant(&params.diesel, &reduced, &params.base).unwrap();
        let aug = augment(&plant, &assemble_reference(&params.reference), DisturbanceChannel::Shared).unwrap();
        let synthesis = synthesize_gain(&aug, &DelayBounds::default(), &SynthesisOptions::default()).unwrap();
        Fixture { params, reduced, aug, synthesis }
    })
}

#[test]
fn certificate_margin_beats_epsilon() {
    let f = fixture();
    let s = &f.synthesis;
    println!("gamma {:.5}, margin {:.3e}, eps {:.1e}", s.gamma, s.margin.max_eigenvalue, s.margin.epsilon);
    assert!(s.margin.passes);
    assert!(s.margin.max_eigenvalue <= -s.margin.epsilon);
    let rep = validate_closed_loop(&f.aug, &s.gains, Some(&s.certificate)).unwrap();
    assert_eq!(rep.margin.unwrap().max_eigenvalue, s.margin.max_eigenvalue);
}

#[test]
fn gain_times_lyapunov_matrix_recovers_kbar() {
    let s = &fixture().synthesis;
    let p = &s.certificate.variables["P"];
    let kbar = &s.certificate.variables["K"];
    let k = Matrix::row(&s.gains.to_vec());
    let diff = (&(&k * p) - kbar).max_abs();
    assert!(diff <= 1e-8 * kbar.max_abs().max(1.0), "{diff}");
}

#[test]
fn synthesized_and_published_gains_are_hurwitz() {
    let f = fixture();
    let ours = validate_closed_loop(&f.aug, &f.synthesis.gains, None).unwrap();
    assert!(ours.stable, "{:?}", ours.eigenvalues);
    let published = validate_closed_loop(&f.aug, &GainPair::from_slice(&PUBLISHED_GAIN).unwrap(), None).unwrap();
    assert!(published.stable, "{:?}", published.eigenvalues);
}

#[test]
fn stability_verdict_agrees_with_matrix_exponential() {
    let f = fixture();
    let flipped = GainPair::from_slice(&f.synthesis.gains.to_vec().iter().map(|v| -v).collect::<Vec<_>>()).unwrap();
    for (gains, expect) in [(f.synthesis.gains, true), (flipped, false)] {
        let rep = validate_closed_loop(&f.aug, &gains, None).unwrap();
        assert_eq!(rep.stable, expect);
        let growth = expm(&f.aug.closed_loop(&gains).scale(5.0)).unwrap().max_abs();
        assert_eq!(growth < 1e10, expect, "growth {growth}");
    }
}

#[test]
fn pulse_gain_stays_below_certified_level() {
    let f = fixture();
    let models = SimModels { params: f.params, reduced: f.reduced, equilibrium: None };
    let delays = DelayBounds::default();
    for delay in [delays.eta_m, delays.midpoint(), delays.kappa] {
        let scenario = Scenario {
            name: "pulse".into(),
            disturbance: Disturbance::Pulse { start: 0.0, width: 1.0, magnitude: 0.3 },
            controller: Controller::Mrc { gains: f.synthesis.gains, delay },
            duration: 30.0,
            dt: 5e-4,
            fidelity: Fidelity::Linear,
            rocof_window: 0.1,
        };
        let traj = run_scenario(&scenario, &models).unwrap();
        let l2 = compute_metrics(&traj, &scenario).unwrap().l2_gain.unwrap();
        println!("delay {delay}: L2 gain {l2:.5} vs gamma {:.5}", f.synthesis.gamma);
        assert!(l2 <= 1.05 * f.synthesis.gamma);
    }
}

#[test]
fn matching_plant_and_reference_is_tracked_without_control() {
    let p = PlantParameters::reference_case();
    let r = p.reference;
    let mut diesel = p.diesel;
    diesel.m_d = r.m_r;
    diesel.tau_d = r.tau_dr;
    diesel.tau_sm = r.tau_smr;
    diesel.r_d = r.r_r;
    let inert = ReducedWtgModel { a_rd: -0.1, b_rd: -0.2, c_rd: 0.0, d_rd: 0.0, lambda_r: -0.1, base: Some(p.base) };
    let plant = assemble_plant(&diesel, &inert, &p.base).unwrap();
    let aug = augment(&plant, &assemble_reference(&r), DisturbanceChannel::Shared).unwrap();
    let zero = validate_closed_loop(&aug, &GainPair::zero(), None).unwrap();
    assert!(zero.stable && zero.dc_tracking_error.abs() < 1e-12);

    let models = SimModels { params: PlantParameters { diesel, ..p }, reduced: inert, equilibrium: None };
    let scenario = Scenario::step("matched", 0.3, Controller::None);
    let traj = run_scenario(&scenario, &models).unwrap();
    assert!(traj.tracking_error().iter().all(|e| e.abs() < 1e-12));

    // The delay-dependent bound keeps a floor even when the true gain is zero.
    let s = synthesize_gain(&aug, &DelayBounds::default(), &SynthesisOptions::default()).unwrap();
    println!("matched gamma {:.3e} vs default {:.3e}", s.gamma, fixture().synthesis.gamma);
    assert!(s.gamma <= 1.01 * fixture().synthesis.gamma);
    assert!(s.gamma < 1e-2);
}

#[test]
fn shrinking_upper_delay_never_raises_gamma() {
    let f = fixture();
    let gammas: Vec<f64> = std::thread::scope(|scope| {
        let jobs: Vec<_> = [5e-3, 2.5e-3]
            .into_iter()
            .map(|kappa| {
                scope.spawn(move || {
                    let d = DelayBounds { eta_m: 1e-3, kappa };
                    synthesize_gain(&f.aug, &d, &SynthesisOptions::default()).unwrap().gamma
                })
            })
            .collect();
        jobs.into_iter().map(|j| j.join().unwrap()).collect()
    });
    println!("gamma at kappa 10/5/2.5 ms: {:.5} {:.5} {:.5}", f.synthesis.gamma, gammas[0], gammas[1]);
    assert!(gammas[0] <= 1.01 * f.synthesis.gamma);
    assert!(gammas[1] <= 1.01 * gammas[0]);
}
