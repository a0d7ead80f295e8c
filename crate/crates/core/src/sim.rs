//! Fixed-step closed-loop simulation and response metrics.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{abs, sqrt};
use crate::linearization::Equilibrium;
use crate::mrc::GainPair;
use crate::plant::{
    diesel_rhs, reference_model_rhs, wtg_derivative, DieselState, PlantParameters, ReferenceState, WtgState,
};
use crate::sma::ReducedWtgModel;

/// Column order of exported trajectories.
pub const CHANNELS: [&str; 8] = ["time", "d_omega_d", "omega_hat", "omega_m", "p_gen", "p_ed", "u_ie", "p_l"];

/// Classical fourth-order Runge-Kutta step of `x' = f(t, x)`.
pub fn rk4_step<F>(f: &mut F, t: f64, x: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let n = x.len();
    let axpy = |a: f64, k: &[f64]| -> Vec<f64> { (0..n).map(|i| x[i] + a * k[i]).collect() };
    let k1 = f(t, x)?;
    let k2 = f(t + 0.5 * dt, &axpy(0.5 * dt, &k1))?;
    let k3 = f(t + 0.5 * dt, &axpy(0.5 * dt, &k2))?;
    let k4 = f(t + dt, &axpy(dt, &k3))?;
    Ok((0..n).map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}

/// Integrates `x' = f(t, x)` on the grid `t_k = k·dt` up to `duration`,
/// returning the grid and the states.
pub fn integrate<F>(mut f: F, x0: &[f64], dt: f64, duration: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let steps = step_count(dt, duration)?;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    times.push(0.0);
    states.push(x.clone());
    for k in 0..steps {
        let t = k as f64 * dt;
        x = rk4_step(&mut f, t, &x, dt)?;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged { time: t + dt });
        }
        times.push((k + 1) as f64 * dt);
        states.push(x.clone());
    }
    Ok((times, states))
}

fn step_count(dt: f64, duration: f64) -> Result<usize> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidScenario("dt must be finite and > 0"));
    }
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(Error::InvalidScenario("duration must be finite and >= 0"));
    }
    Ok(libm::round(duration / dt) as usize)
}

/// Piecewise-constant load deviation (pu).
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum Disturbance {
    Step { time: f64, magnitude: f64 },
    /// Finite-energy rectangle on `[start, start + width)`.
    Pulse { start: f64, width: f64, magnitude: f64 },
}

impl Disturbance {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Disturbance::Step { time, magnitude } => {
                if t >= time {
                    magnitude
                } else {
                    0.0
                }
            }
            Disturbance::Pulse { start, width, magnitude } => {
                if t >= start && t < start + width {
                    magnitude
                } else {
                    0.0
                }
            }
        }
    }

    pub fn onset(&self) -> f64 {
        match *self {
            Disturbance::Step { time, .. } => time,
            Disturbance::Pulse { start, .. } => start,
        }
    }

    pub fn magnitude(&self) -> f64 {
        match *self {
            Disturbance::Step { magnitude, .. } | Disturbance::Pulse { magnitude, .. } => magnitude,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum Controller {
    None,
    /// `u_ie(t) = K_p x_p(t - delay) + K_r x_r(t - delay)`.
    Mrc { gains: GainPair, delay: f64 },
    /// `u_ie = -K_w s/(T s + 1) Δω_d`.
    Washout { k_w: f64, time_constant: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum Fidelity {
    /// Diesel rows plus the reduced single-state turbine.
    #[default]
    Linear,
    /// Diesel rows plus the six-state turbine with converter algebraics.
    Nonlinear,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct Scenario {
    pub name: String,
    pub disturbance: Disturbance,
    pub controller: Controller,
    pub duration: f64,
    pub dt: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub fidelity: Fidelity,
    /// Least-squares window after the disturbance onset for RoCoF (s).
    #[cfg_attr(feature = "serde", serde(default = "default_rocof_window"))]
    pub rocof_window: f64,
}

fn default_rocof_window() -> f64 {
    0.1
}

impl Scenario {
    pub fn step(name: &str, magnitude: f64, controller: Controller) -> Self {
        Scenario {
            name: name.into(),
            disturbance: Disturbance::Step { time: 0.0, magnitude },
            controller,
            duration: 10.0,
            dt: 1e-3,
            fidelity: Fidelity::Linear,
            rocof_window: default_rocof_window(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        step_count(self.dt, self.duration)?;
        if self.disturbance.onset() > self.duration || self.disturbance.onset() < 0.0 {
            return Err(Error::InvalidScenario("disturbance onset must lie in [0, duration]"));
        }
        if !(self.rocof_window.is_finite() && self.rocof_window > 0.0) {
            return Err(Error::InvalidScenario("rocof_window must be finite and > 0"));
        }
        match self.controller {
            Controller::Mrc { delay, .. } => {
                if !(delay.is_finite() && delay >= 0.0) {
                    return Err(Error::InvalidScenario("delay must be finite and >= 0"));
                }
                if delay > 0.0 && delay < self.dt {
                    return Err(Error::InvalidScenario("a nonzero delay must be at least dt"));
                }
            }
            Controller::Washout { k_w, time_constant } => {
                if !(k_w.is_finite() && k_w >= 0.0) {
                    return Err(Error::InvalidScenario("washout gain must be finite and >= 0"));
                }
                if !(time_constant.is_finite() && time_constant > 0.0) {
                    return Err(Error::InvalidScenario("washout time constant must be finite and > 0"));
                }
            }
            Controller::None => {}
        }
        Ok(())
    }
}

/// Uniformly sampled closed-loop response in per-unit deviations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub time: Vec<f64>,
    pub d_omega_d: Vec<f64>,
    pub omega_hat: Vec<f64>,
    pub omega_m: Vec<f64>,
    pub p_gen: Vec<f64>,
    pub p_ed: Vec<f64>,
    pub u_ie: Vec<f64>,
    pub p_l: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// Columns in [`CHANNELS`] order.
    pub fn columns(&self) -> [&[f64]; 8] {
        [&self.time, &self.d_omega_d, &self.omega_hat, &self.omega_m, &self.p_gen, &self.p_ed, &self.u_ie, &self.p_l]
    }

    pub fn tracking_error(&self) -> Vec<f64> {
        self.d_omega_d.iter().zip(&self.omega_hat).map(|(a, b)| a - b).collect()
    }

    fn push(&mut self, t: f64, s: &Sample) {
        self.time.push(t);
        self.d_omega_d.push(s.d_omega_d);
        self.omega_hat.push(s.omega_hat);
        self.omega_m.push(s.omega_m);
        self.p_gen.push(s.p_gen);
        self.p_ed.push(s.p_l - s.p_gen);
        self.u_ie.push(s.u_ie);
        self.p_l.push(s.p_l);
    }
}

/// Everything a scenario run needs besides the scenario itself.
#[derive(Clone, Debug, PartialEq)]
pub struct SimModels {
    pub params: PlantParameters,
    pub reduced: ReducedWtgModel,
    /// Operating point of the nonlinear turbine; required for nonlinear runs.
    pub equilibrium: Option<Equilibrium>,
}

struct Sample {
    d_omega_d: f64,
    omega_hat: f64,
    omega_m: f64,
    p_gen: f64,
    u_ie: f64,
    p_l: f64,
}

/// Past commanded inputs on the simulation grid, linearly interpolated.
struct DelayLine {
    dt: f64,
    delay: f64,
    history: Vec<f64>,
}

impl DelayLine {
    fn at(&self, t: f64) -> f64 {
        let s = t - self.delay;
        if s <= 0.0 {
            return if s == 0.0 { self.history.first().copied().unwrap_or(0.0) } else { 0.0 };
        }
        let pos = s / self.dt;
        let k = libm::floor(pos) as usize;
        let frac = pos - k as f64;
        let last = self.history.len() - 1;
        if k >= last {
            return self.history[last];
        }
        self.history[k] * (1.0 - frac) + self.history[k + 1] * frac
    }
}

/// State layout: plant block, reference `[ω̂, P̂_m, P̂_v]`, washout state.
struct Layout {
    plant: usize,
    fidelity: Fidelity,
}

impl Layout {
    fn reference(&self) -> usize {
        self.plant
    }
    fn washout(&self) -> usize {
        self.plant + 3
    }
    fn len(&self) -> usize {
        self.plant + 4
    }
}

struct Runner<'a> {
    models: &'a SimModels,
    scenario: &'a Scenario,
    layout: Layout,
    eq: Option<Equilibrium>,
}

impl Runner<'_> {
    /// Plant measurements `[Δω_d, ΔP_m, ΔP_v, Δω_m(pu)]`.
    fn plant_vector(&self, x: &[f64]) -> [f64; 4] {
        match self.layout.fidelity {
            Fidelity::Linear => [x[0], x[1], x[2], x[3]],
            Fidelity::Nonlinear => {
                let eq = self.eq.as_ref().map(|e| e.x_eq.omega_m).unwrap_or(0.0);
                let p = &self.models.params;
                let dw = p.base.mech_speed_to_pu(x[3 + 2] - eq, p.wtg.turbine.pole_pairs_p);
                [x[0], x[1], x[2], dw]
            }
        }
    }

    /// Instantaneous controller command (before any delay).
    fn command(&self, x: &[f64]) -> f64 {
        match self.scenario.controller {
            Controller::None => 0.0,
            Controller::Mrc { gains, .. } => {
                let r = self.layout.reference();
                gains.control(&self.plant_vector(x), &x[r..r + 3])
            }
            Controller::Washout { k_w, time_constant } => -k_w * (x[0] - x[self.layout.washout()]) / time_constant,
        }
    }

    /// Derivative and measured channels for state `x` with applied input `u`.
    fn evaluate(&self, t: f64, x: &[f64], u: f64) -> Result<(Vec<f64>, Sample)> {
        let p = &self.models.params;
        let p_l = self.scenario.disturbance.value(t);
        let mut dx = vec![0.0; x.len()];
        let (p_gen, omega_m) = match self.layout.fidelity {
            Fidelity::Linear => {
                let r = &self.models.reduced;
                dx[3] = r.a_rd * x[3] + r.b_rd * u;
                (r.c_rd * x[3] + r.d_rd * u, x[3])
            }
            Fidelity::Nonlinear => {
                let eq = self.eq.as_ref().ok_or(Error::InvalidScenario("nonlinear run needs an equilibrium"))?;
                let w = WtgState::from_slice(&x[3..9]);
                let u_si = eq.u_eq + p.base.pu_to_power(u);
                let (d, alg) = wtg_derivative(&w, u_si, eq.v_wind, &p.wtg)?;
                dx[3..9].copy_from_slice(&d.to_array());
                let p_gen = p.base.power_to_pu(alg.p_gen() - eq.algebraics_eq.p_gen());
                (p_gen, self.plant_vector(x)[3])
            }
        };
        let diesel = diesel_rhs(DieselState::from_array([x[0], x[1], x[2]]), p_l - p_gen, &p.diesel)?;
        dx[..3].copy_from_slice(&diesel.to_array());
        let r = self.layout.reference();
        let xr = ReferenceState { omega_hat: x[r], p_m_hat: x[r + 1], p_v_hat: x[r + 2] };
        dx[r..r + 3].copy_from_slice(&reference_model_rhs(xr, p_l, &p.reference).to_array());
        if let Controller::Washout { time_constant, .. } = self.scenario.controller {
            let w = self.layout.washout();
            dx[w] = (x[0] - x[w]) / time_constant;
        }
        let sample = Sample { d_omega_d: x[0], omega_hat: x[r], omega_m, p_gen, u_ie: u, p_l };
        Ok((dx, sample))
    }
}

/// Simulates one scenario from the equilibrium (all deviations zero).
pub fn run_scenario(scenario: &Scenario, models: &SimModels) -> Result<Trajectory> {
    scenario.validate()?;
    let plant = match scenario.fidelity {
        Fidelity::Linear => 4,
        Fidelity::Nonlinear => 9,
    };
    let layout = Layout { plant, fidelity: scenario.fidelity };
    let eq = match scenario.fidelity {
        Fidelity::Linear => None,
        Fidelity::Nonlinear => Some(
            models.equilibrium.clone().ok_or(Error::InvalidScenario("nonlinear run needs an equilibrium"))?,
        ),
    };
    let mut x = vec![0.0; layout.len()];
    if let Some(e) = &eq {
        x[3..9].copy_from_slice(&e.x_eq.to_array());
    }
    let runner = Runner { models, scenario, layout, eq };
    let delay = match scenario.controller {
        Controller::Mrc { delay, .. } => delay,
        _ => 0.0,
    };
    let steps = step_count(scenario.dt, scenario.duration)?;
    let dt = scenario.dt;
    let mut line = DelayLine { dt, delay, history: Vec::with_capacity(steps + 1) };
    let mut traj = Trajectory::default();

    let applied = |line: &DelayLine, t: f64, x: &[f64]| -> f64 {
        if delay == 0.0 {
            runner.command(x)
        } else {
            line.at(t)
        }
    };

    for k in 0..=steps {
        let t = k as f64 * dt;
        line.history.push(runner.command(&x));
        let (_, sample) = runner.evaluate(t, &x, applied(&line, t, &x))?;
        traj.push(t, &sample);
        if k == steps {
            break;
        }
        let mut f = |ts: f64, xs: &[f64]| -> Result<Vec<f64>> {
            Ok(runner.evaluate(ts, xs, applied(&line, ts, xs))?.0)
        };
        x = rk4_step(&mut f, t, &x, dt)?;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged { time: t + dt });
        }
    }
    Ok(traj)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Metrics {
    /// Extreme `Δω_d` (signed, pu).
    pub nadir: f64,
    /// Least-squares slope of `Δω_d` over the RoCoF window (pu/s).
    pub rocof: f64,
    pub steady_state: f64,
    pub tracking_peak: f64,
    /// Peak tracking error divided by the reference nadir magnitude.
    pub tracking_peak_relative: f64,
    pub tracking_rms: f64,
    /// `ΔP / (2 |RoCoF|)`; absent when there is no disturbance or no slope.
    pub h_est: Option<f64>,
    /// `sqrt(∫e² / ∫w²)` for finite-energy disturbances.
    pub l2_gain: Option<f64>,
}

/// Least-squares slope of `y` against `t`.
pub fn ls_slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = t.iter().zip(y).map(|(a, b)| (a - mt) * (b - my)).sum();
    let sxx: f64 = t.iter().map(|a| (a - mt) * (a - mt)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

fn extreme(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, |m, x| if abs(x) > abs(m) { x } else { m })
}

/// Trapezoidal integral of `v²` on a uniform grid.
fn energy(v: &[f64], dt: f64) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let s: f64 = v.iter().map(|x| x * x).sum();
    dt * (s - 0.5 * (v[0] * v[0] + v[v.len() - 1] * v[v.len() - 1]))
}

pub fn compute_metrics(traj: &Trajectory, scenario: &Scenario) -> Result<Metrics> {
    if traj.is_empty() {
        return Err(Error::InvalidScenario("empty trajectory"));
    }
    let onset = scenario.disturbance.onset();
    let end = onset + scenario.rocof_window;
    let last = traj.time[traj.len() - 1];
    if end > last + 1e-9 * scenario.dt.max(1.0) {
        return Err(Error::InvalidScenario("RoCoF window exceeds trajectory"));
    }
    let lo = traj.time.iter().position(|t| *t >= onset - 1e-12).unwrap_or(0);
    let hi = traj.time.iter().rposition(|t| *t <= end + 1e-12).unwrap_or(lo);
    let rocof = ls_slope(&traj.time[lo..=hi], &traj.d_omega_d[lo..=hi]);
    let e = traj.tracking_error();
    let peak = e.iter().fold(0.0f64, |m, v| m.max(abs(*v)));
    let ref_nadir = abs(extreme(&traj.omega_hat));
    let magnitude = scenario.disturbance.magnitude();
    let h_est = (magnitude != 0.0 && rocof != 0.0).then(|| abs(magnitude) / (2.0 * abs(rocof)));
    let l2_gain = match scenario.disturbance {
        Disturbance::Pulse { .. } => {
            let w = energy(&traj.p_l, scenario.dt);
            (w > 0.0).then(|| sqrt(energy(&e, scenario.dt) / w))
        }
        Disturbance::Step { .. } => None,
    };
    Ok(Metrics {
        nadir: extreme(&traj.d_omega_d),
        rocof,
        steady_state: traj.d_omega_d[traj.len() - 1],
        tracking_peak: peak,
        tracking_peak_relative: if ref_nadir > 0.0 { peak / ref_nadir } else { 0.0 },
        tracking_rms: sqrt(e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64),
        h_est,
        l2_gain,
    })
}

/// RMS distance between two trajectories' `Δω_d`, or of one to a reference.
pub fn rms_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { context: "trajectory length", expected: a.len(), found: b.len() });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64))
}

/// Label used in reports, e.g. `mrc(delay=0.001)`.
pub fn controller_label(c: &Controller) -> String {
    match c {
        Controller::None => "none".into(),
        Controller::Mrc { delay, .. } => format!("mrc(delay={delay})"),
        Controller::Washout { k_w, .. } => format!("washout(k_w={k_w})"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn models() -> SimModels {
        let params = PlantParameters::reference_case();
        SimModels {
            params,
            reduced: ReducedWtgModel {
                a_rd: -0.0997,
                b_rd: -0.2065,
                c_rd: 0.486,
                d_rd: 1.0,
                lambda_r: -0.0997,
                base: Some(params.base),
            },
            equilibrium: None,
        }
    }

    #[test]
    fn exponential_decay_matches_analytic() {
        let (t, x) = integrate(|_, x| Ok(vec![-x[0]]), &[1.0], 0.01, 1.0).unwrap();
        assert!((t[100] - 1.0).abs() < 1e-12);
        assert!((x[100][0] - libm::exp(-1.0)).abs() < 1e-9);
    }

    #[test]
    fn divergence_reports_time() {
        let r = integrate(|_, x| Ok(vec![x[0] * x[0]]), &[1.0], 0.1, 5.0);
        assert!(matches!(r, Err(Error::Diverged { .. }) | Err(Error::NonFinite { .. })));
    }

    #[test]
    fn zero_disturbance_keeps_everything_zero() {
        let mut s = Scenario::step("quiet", 0.0, Controller::Washout { k_w: 0.2, time_constant: 0.005 });
        s.duration = 1.0;
        let tr = run_scenario(&s, &models()).unwrap();
        for c in tr.columns().iter().skip(1) {
            assert!(c.iter().all(|v| *v == 0.0));
        }
        let m = compute_metrics(&tr, &s).unwrap();
        assert_eq!(m.h_est, None);
    }

    #[test]
    fn short_delay_is_rejected() {
        let mut s = Scenario::step("d", 0.3, Controller::Mrc { gains: GainPair::zero(), delay: 5e-4 });
        s.dt = 1e-3;
        assert!(s.validate().is_err());
    }

    #[test]
    fn delay_line_interpolates() {
        let line = DelayLine { dt: 0.1, delay: 0.2, history: vec![0.0, 1.0, 2.0, 3.0] };
        assert_eq!(line.at(0.1), 0.0);
        assert!((line.at(0.35) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn window_beyond_trajectory_is_error() {
        let mut s = Scenario::step("short", 0.3, Controller::None);
        s.duration = 0.05;
        let tr = run_scenario(&s, &models()).unwrap();
        assert!(compute_metrics(&tr, &s).is_err());
    }
}
