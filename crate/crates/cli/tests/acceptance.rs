//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero when
//! any criterion fails.

use std::time::{Duration, Instant};

use inertia_cli::pipeline::augmented_system;
use inertia_cli::Config;
use inertia_core::linalg::expm;
use inertia_core::linearization::{diesel_state_space, linearize, LinearizeOptions};
use inertia_core::lmi::{check_vector, solve_feasibility, LinearMatrixExpression, LmiBuilder, SolveStatus, SolverOptions};
use inertia_core::mrc::{synthesize_gain, validate_closed_loop, AugmentedSystem, DelayBounds, GainPair, Synthesis};
use inertia_core::plant::{diesel_rhs, DieselState};
use inertia_core::sim::{compute_metrics, integrate, rms_distance, run_scenario, Controller, Disturbance, Scenario, SimModels, Trajectory};
use inertia_core::sma::{reduce_turbine, step_fidelity, TurbineReduction};
use inertia_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 0.3;
const H_TOL: f64 = 0.10;
const TRACKING_LIMIT: f64 = 0.10;
const SETTLE_TOL: f64 = 1e-3;
const PULSE_SLACK: f64 = 1.05;
const SMA_EIG_TOL: f64 = 1e-8;
const SMA_ENVELOPE: f64 = 0.15;
const SMA_HARD_LIMIT: f64 = 0.5;
const ORACLE_TOL: f64 = 1e-6;
const JACOBIAN_TOL: f64 = 1e-8;
const PUBLISHED_GAIN: [f64; 7] = [-15.22, 3.90, 3.89, 9.21, 13.85, -7.90, -3.37];

struct Setup {
    cfg: Config,
    turbine: TurbineReduction,
    aug: AugmentedSystem,
    synthesis: Synthesis,
    synthesis_time: Duration,
}

impl Setup {
    fn models(&self) -> SimModels {
        SimModels { params: self.cfg.plant(), reduced: self.turbine.reduction.reduced, equilibrium: Some(self.turbine.equilibrium) }
    }

    fn run(&self, scenario: &Scenario) -> Trajectory {
        run_scenario(scenario, &self.models()).expect("scenario runs")
    }

    fn mrc(&self, delay: f64) -> Scenario {
        Scenario::step("mrc", STEP, Controller::Mrc { gains: self.synthesis.gains, delay })
    }
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn delays(cfg: &Config) -> [f64; 3] {
    [cfg.delays.eta_m, cfg.delays.midpoint(), cfg.delays.kappa]
}

fn inertia_emulation(s: &Setup) -> Verdict {
    let start = Instant::now();
    let mrc = s.mrc(s.cfg.delays.eta_m);
    let h_mrc = compute_metrics(&s.run(&mrc), &mrc).unwrap().h_est.unwrap();
    let base = Scenario::step("diesel", STEP, Controller::None);
    let h_base = compute_metrics(&s.run(&base), &base).unwrap().h_est.unwrap();
    let runtime = start.elapsed();
    let ok = (h_mrc - 3.0).abs() <= H_TOL * 3.0 && (h_base - 2.0).abs() <= H_TOL * 2.0 && runtime.as_secs_f64() < 10.0;
    verdict(
        ok,
        format!(
            "H_est MRC {h_mrc:.4} s (3.0 ± 10%), diesel-only {h_base:.4} s (2.0 ± 10%); simulation {:.2} s (< 10 s, synthesis excluded)",
            runtime.as_secs_f64()
        ),
    )
}

fn tracking(s: &Setup) -> Verdict {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for nu in delays(&s.cfg) {
        let sc = s.mrc(nu);
        let m = compute_metrics(&s.run(&sc), &sc).unwrap();
        worst = worst.max(m.tracking_peak_relative);
        parts.push(format!("ν={:.4}: {:.4}", nu, m.tracking_peak_relative));
    }
    verdict(worst <= TRACKING_LIMIT, format!("peak |e| / |ω̂ nadir| {} (≤ {TRACKING_LIMIT})", parts.join(", ")))
}

fn steady_state(s: &Setup) -> Verdict {
    let target = -s.cfg.reference.r_r * STEP;
    let traj = s.run(&s.mrc(s.cfg.delays.eta_m));
    let (w, r) = (*traj.d_omega_d.last().unwrap(), *traj.omega_hat.last().unwrap());
    verdict(
        (w - target).abs() <= SETTLE_TOL && (r - target).abs() <= SETTLE_TOL,
        format!("t=10 s: Δω_d {w:.6}, ω̂ {r:.6}, target {target} ± {SETTLE_TOL}"),
    )
}

fn soundness(s: &Setup) -> Verdict {
    let rep = validate_closed_loop(&s.aug, &s.synthesis.gains, Some(&s.synthesis.certificate)).unwrap();
    let margin = rep.margin.as_ref().unwrap();
    let mut worst_ratio = 0.0f64;
    for nu in delays(&s.cfg) {
        let sc = Scenario {
            name: "pulse".into(),
            disturbance: Disturbance::Pulse { start: 0.0, width: 1.0, magnitude: STEP },
            controller: Controller::Mrc { gains: s.synthesis.gains, delay: nu },
            duration: 30.0,
            dt: 5e-4,
            ..s.mrc(nu)
        };
        let l2 = compute_metrics(&s.run(&sc), &sc).unwrap().l2_gain.unwrap();
        worst_ratio = worst_ratio.max(l2 * l2 / (s.synthesis.gamma * s.synthesis.gamma));
    }
    let t = s.synthesis_time.as_secs_f64();
    let ok = margin.passes && rep.stable && worst_ratio <= PULSE_SLACK && t < 120.0;
    verdict(
        ok,
        format!(
            "γ {:.5}, re-substituted max eig {:.3e} ≤ -{:.1e}, Hurwitz {}, max ∫e²/(γ²∫w²) {:.4} (≤ {PULSE_SLACK}); synthesis with bisection {t:.1} s (< 120 s)",
            s.synthesis.gamma, margin.max_eigenvalue, margin.epsilon, rep.stable, worst_ratio
        ),
    )
}

fn published_gain(s: &Setup) -> Verdict {
    let gains = GainPair::from_slice(&PUBLISHED_GAIN).unwrap();
    let rep = validate_closed_loop(&s.aug, &gains, None).unwrap();
    let sc = Scenario::step("published", STEP, Controller::Mrc { gains, delay: s.cfg.delays.eta_m });
    let traj = s.run(&sc);
    let peak = traj.d_omega_d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tail = &traj.d_omega_d[traj.len() - 1000..];
    let drift = tail.iter().fold(0.0f64, |m, v| m.max((v - tail[tail.len() - 1]).abs()));
    let bounded = traj.d_omega_d.iter().all(|v| v.is_finite()) && peak < 1.0 && drift < 1e-3;
    verdict(rep.stable && bounded, format!("zero-delay Hurwitz {}, step peak |Δω_d| {peak:.5} pu, last-second drift {drift:.2e}", rep.stable))
}

fn sma_fidelity(s: &Setup) -> Verdict {
    let r = s.turbine.reduction.reduced;
    let eig_err = (r.a_rd - r.lambda_r).abs() / r.lambda_r.abs();
    let fid = step_fidelity(&s.turbine.full, &r, 5.0, 1e-3).unwrap().peak_deviation;
    let envelope = if fid <= SMA_ENVELOPE { "within" } else { "outside" };
    verdict(
        eig_err <= SMA_EIG_TOL && fid <= SMA_HARD_LIMIT,
        format!(
            "λ_r {:.6}, relative eigenvalue error {eig_err:.1e} (≤ {SMA_EIG_TOL:.0e}); step deviation {:.2}% ({envelope} the {:.0}% envelope, hard limit {:.0}%)",
            r.lambda_r,
            100.0 * fid,
            100.0 * SMA_ENVELOPE,
            100.0 * SMA_HARD_LIMIT
        ),
    )
}

fn numerics(s: &Setup) -> Verdict {
    let err = |dt: f64| {
        let (_, xs) = integrate(|_, x: &[f64]| Ok(vec![-x[0]]), &[1.0], dt, 1.0).unwrap();
        (xs.last().unwrap()[0] - (-1.0f64).exp()).abs()
    };
    let ratio = err(0.02) / err(0.01);

    let mut sc = Scenario::step("oracle", STEP, Controller::Mrc { gains: s.synthesis.gains, delay: 0.0 });
    sc.duration = 5.0;
    let traj = s.run(&sc);
    let n = s.aug.n();
    let mut big = Matrix::zeros(n + 1, n + 1);
    big.set_submatrix(0, 0, &s.aug.closed_loop(&s.synthesis.gains));
    big.set_submatrix(0, n, &s.aug.e_bar);
    let mut x0 = vec![0.0; n + 1];
    x0[n] = STEP;
    let mut oracle_err = 0.0f64;
    for k in (0..traj.len()).step_by(250) {
        let x = expm(&big.scale(traj.time[k])).unwrap().mul_vec(&x0);
        oracle_err = oracle_err.max((traj.d_omega_d[k] - x[0]).abs()).max((traj.omega_hat[k] - x[4]).abs());
    }

    let d = s.cfg.diesel;
    let f = |x: &[f64], u: f64| {
        let dx = diesel_rhs(DieselState::from_array([x[0], x[1], x[2]]), u, &d)?;
        Ok((dx.to_array().to_vec(), vec![x[0]]))
    };
    let (a, b, _, _) = linearize(f, &[0.0; 3], 0.0, &LinearizeOptions::default()).unwrap();
    let exact = diesel_state_space(&d);
    let jac_err = (&a - &exact.a).max_abs().max((&b - &exact.b).max_abs());

    verdict(
        (ratio - 16.0).abs() < 1.0 && oracle_err <= ORACLE_TOL && jac_err <= JACOBIAN_TOL,
        format!("RK4 error ratio {ratio:.3} (≈16); closed loop vs expm {oracle_err:.1e} pu (≤ {ORACLE_TOL:.0e}); diesel Jacobian {jac_err:.1e} (≤ {JACOBIAN_TOL:.0e})"),
    )
}

fn lyapunov(a: &Matrix) -> LinearMatrixExpression {
    let n = a.nrows();
    let id = Matrix::identity(n);
    let mut b = LmiBuilder::new();
    let p = b.symmetric("P", n);
    let c = b.constraint("decay", &[n]);
    b.add_term(c, 0, 0, &a.transpose(), p, false, &id, 1.0);
    b.add_term(c, 0, 0, &id, p, false, a, 1.0);
    let pos = b.constraint("p_positive", &[n]);
    b.add_term(pos, 0, 0, &id, p, false, &id, -1.0);
    b.add_constant(pos, 0, 0, &id.scale(1e-7));
    b.build()
}

/// `F(y) = F0 + Σ y_i F_i` with `F0` chosen so that a random `y*` gives `-I`.
fn planted(rng: &mut ChaCha8Rng) -> LinearMatrixExpression {
    let rand_m = |rng: &mut ChaCha8Rng, r, c| Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
    let (a, g, h) = (rand_m(rng, 4, 4), rand_m(rng, 2, 2), rand_m(rng, 4, 2));
    let build = |f0: Option<&Matrix>| {
        let mut b = LmiBuilder::new();
        let x = b.symmetric("X", 4);
        let k = b.full("K", 2, 4);
        let c = b.constraint("main", &[4, 2]);
        let i4 = Matrix::identity(4);
        b.add_term(c, 0, 0, &a, x, false, &i4, 1.0);
        b.add_term(c, 0, 0, &i4, x, false, &a.transpose(), 1.0);
        b.add_term(c, 0, 1, &i4, k, true, &Matrix::identity(2), 1.0);
        b.add_term(c, 1, 1, &g, k, false, &h, -1.0);
        if let Some(f0) = f0 {
            b.add_constant(c, 0, 0, &f0.submatrix(0, 0, 4, 4));
            b.add_constant(c, 0, 1, &f0.submatrix(0, 4, 4, 2));
            b.add_constant(c, 1, 1, &f0.submatrix(4, 4, 2, 2));
        }
        b.build()
    };
    let lin = build(None);
    let y: Vec<f64> = (0..lin.n_scalars()).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let f0 = &(-&lin.evaluate(&y)[0]) - &Matrix::identity(6);
    build(Some(&f0))
}

fn lmi_regression(_: &Setup) -> Verdict {
    let start = Instant::now();
    let opts = SolverOptions::default();
    let stable = solve_feasibility(&lyapunov(&Matrix::from_rows(&[&[-1.0, 2.0], &[0.0, -3.0]])), &opts).status;
    let unstable = solve_feasibility(&lyapunov(&Matrix::from_rows(&[&[0.5, 2.0], &[0.0, -3.0]])), &opts).status;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut certified = 0;
    for _ in 0..20 {
        let expr = planted(&mut rng);
        let sol = solve_feasibility(&expr, &opts);
        if sol.status == SolveStatus::Feasible && check_vector(&expr, &sol.y, sol.epsilon).unwrap().passes {
            certified += 1;
        }
    }
    let t = start.elapsed().as_secs_f64();
    verdict(
        stable == SolveStatus::Feasible && unstable == SolveStatus::Infeasible && certified == 20 && t < 30.0,
        format!("Lyapunov pair {stable:?}/{unstable:?}; {certified}/20 planted instances certified; {t:.2} s (< 30 s)"),
    )
}

fn washout(s: &Setup) -> Verdict {
    let rms = |k_w| {
        let t = s.run(&Scenario::step("w", STEP, Controller::Washout { k_w, time_constant: 0.005 }));
        rms_distance(&t.d_omega_d, &t.omega_hat).unwrap()
    };
    let (with, without) = (rms(0.2), rms(0.0));
    verdict(with < without, format!("RMS(Δω_d - ω̂): K_w=0.2 {with:.4e} < K_w=0 {without:.4e}"))
}

fn main() {
    let cfg = Config::default_config();
    let turbine = reduce_turbine(&cfg.plant(), &cfg.reduction).expect("turbine reduction");
    let aug = augmented_system(&cfg, &turbine.reduction.reduced).expect("augmented system");
    let start = Instant::now();
    let synthesis = synthesize_gain(&aug, &cfg.delays, &cfg.synthesis).expect("synthesis");
    let synthesis_time = start.elapsed();
    assert_eq!(cfg.delays, DelayBounds::default());
    let setup = Setup { cfg, turbine, aug, synthesis, synthesis_time };

    let criteria: [(&str, fn(&Setup) -> Verdict); 9] = [
        ("inertia emulation", inertia_emulation),
        ("tracking", tracking),
        ("steady state", steady_state),
        ("certificate soundness", soundness),
        ("published gain", published_gain),
        ("modal reduction fidelity", sma_fidelity),
        ("numerics", numerics),
        ("LMI solver regression", lmi_regression),
        ("washout comparison", washout),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check(&setup);
        if !v.pass {
            failed += 1;
        }
        println!("{} criterion {} ({name}): {}", if v.pass { "PASS" } else { "FAIL" }, i + 1, v.detail);
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
