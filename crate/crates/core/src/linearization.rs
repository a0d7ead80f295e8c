//! Turbine trim and finite-difference linearization.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{abs, Lu, Matrix};
use crate::plant::{
    msc_algebraic_solve, power_coefficient, wtg_derivative, wtg_power_reference, BaseUnits,
    DieselParams, WtgAlgebraics, WtgParams, WtgState, WTG_OMEGA_INDEX, WTG_STATE_NAMES,
};

/// Linear model `x' = A x + B u + E w`, `y = C x + D u`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpaceModel {
    pub a: Matrix,
    pub b: Matrix,
    pub e: Matrix,
    pub c: Matrix,
    pub d: Matrix,
    pub state_names: Vec<String>,
    pub input_names: Vec<String>,
    pub output_names: Vec<String>,
}

impl StateSpaceModel {
    pub fn new(
        a: Matrix,
        b: Matrix,
        e: Matrix,
        c: Matrix,
        d: Matrix,
        state_names: &[&str],
        input_names: &[&str],
        output_names: &[&str],
    ) -> Result<Self> {
        let m = StateSpaceModel {
            a,
            b,
            e,
            c,
            d,
            state_names: state_names.iter().map(|s| s.to_string()).collect(),
            input_names: input_names.iter().map(|s| s.to_string()).collect(),
            output_names: output_names.iter().map(|s| s.to_string()).collect(),
        };
        m.check()?;
        Ok(m)
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    /// Dimensional consistency and finiteness.
    pub fn check(&self) -> Result<()> {
        let n = self.a.nrows();
        let dim = |context, expected, found| {
            if expected == found {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { context, expected, found })
            }
        };
        dim("A columns", n, self.a.ncols())?;
        dim("B rows", n, self.b.nrows())?;
        dim("E rows", n, self.e.nrows())?;
        dim("C columns", n, self.c.ncols())?;
        dim("D rows", self.c.nrows(), self.d.nrows())?;
        dim("D columns", self.b.ncols(), self.d.ncols())?;
        dim("state names", n, self.state_names.len())?;
        dim("input names", self.b.ncols(), self.input_names.len())?;
        dim("output names", self.c.nrows(), self.output_names.len())?;
        for m in [&self.a, &self.b, &self.e, &self.c, &self.d] {
            if !m.is_finite() {
                return Err(Error::NonFinite { context: "state-space matrices" });
            }
        }
        Ok(())
    }

    /// Steady-state gain `D - C A⁻¹ B`.
    pub fn dc_gain(&self) -> Result<Matrix> {
        let x = self.a.solve(&self.b)?;
        Ok(&self.d - &(&self.c * &x))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct LinearizeOptions {
    /// Relative state step; the absolute step is `max(rel, rel·|x_i|)`.
    pub relative_step: f64,
    /// Absolute step for the input channel.
    pub input_step: f64,
}

impl Default for LinearizeOptions {
    fn default() -> Self {
        LinearizeOptions { relative_step: 1e-6, input_step: 1.0 }
    }
}

pub fn difference_step(x: f64, relative: f64) -> f64 {
    relative.max(relative * abs(x))
}

/// Central-difference Jacobian of `f` at `x` with per-coordinate steps.
pub fn jacobian<F>(f: F, x: &[f64], steps: &[f64]) -> Result<Matrix>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let f0 = f(x)?;
    let mut jac = Matrix::zeros(f0.len(), x.len());
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let h = steps[j];
        xp[j] = x[j] + h;
        let fp = f(&xp)?;
        xp[j] = x[j] - h;
        let fm = f(&xp)?;
        xp[j] = x[j];
        for i in 0..f0.len() {
            let q = (fp[i] - fm[i]) / (2.0 * h);
            if !q.is_finite() {
                return Err(Error::NonFiniteJacobian { row: i, col: j });
            }
            jac[(i, j)] = q;
        }
    }
    Ok(jac)
}

/// Linearizes `f(x, u) -> (x', y)` about `(x0, u0)` for a single input.
pub fn linearize<F>(f: F, x0: &[f64], u0: f64, opts: &LinearizeOptions) -> Result<(Matrix, Matrix, Matrix, Matrix)>
where
    F: Fn(&[f64], f64) -> Result<(Vec<f64>, Vec<f64>)>,
{
    let n = x0.len();
    let steps: Vec<f64> = x0.iter().map(|v| difference_step(*v, opts.relative_step)).collect();
    let stacked = |x: &[f64]| -> Result<Vec<f64>> {
        let (mut dx, y) = f(x, u0)?;
        dx.extend(y);
        Ok(dx)
    };
    let jx = jacobian(stacked, x0, &steps)?;
    let by_u = |u: &[f64]| -> Result<Vec<f64>> {
        let (mut dx, y) = f(x0, u[0])?;
        dx.extend(y);
        Ok(dx)
    };
    let ju = jacobian(by_u, &[u0], &[opts.input_step])?;
    let rows = jx.nrows();
    let a = jx.submatrix(0, 0, n, n);
    let c = jx.submatrix(n, 0, rows - n, n);
    let b = ju.submatrix(0, 0, n, 1);
    let d = ju.submatrix(n, 0, rows - n, 1);
    Ok((a, b, c, d))
}

/// Trimmed turbine operating point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Equilibrium {
    pub x_eq: WtgState,
    pub u_eq: f64,
    pub algebraics_eq: WtgAlgebraics,
    pub v_wind: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct NewtonOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { max_iterations: 50, tolerance: 1e-10 }
    }
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(abs(*x)))
}

fn wtg_residual(x: &[f64], u: f64, v_wind: f64, params: &WtgParams) -> Result<Vec<f64>> {
    let (d, _) = wtg_derivative(&WtgState::from_slice(x), u, v_wind, params)?;
    Ok(d.to_array().to_vec())
}

/// Tip-speed ratio maximising the power coefficient (golden-section search).
pub fn optimal_tip_speed_ratio(theta: f64) -> f64 {
    let (mut lo, mut hi) = (1.0, 20.0);
    let r = 0.5 * (libm::sqrt(5.0) - 1.0);
    for _ in 0..200 {
        let a = hi - r * (hi - lo);
        let b = lo + r * (hi - lo);
        if power_coefficient(a, theta) > power_coefficient(b, theta) {
            hi = b;
        } else {
            lo = a;
        }
    }
    0.5 * (lo + hi)
}

/// Starting point near the MPPT operating point: zero d-current, torque
/// balance on the q-axis, integrators at their steady-state values.
pub fn default_initial_guess(params: &WtgParams, v_wind: f64) -> WtgState {
    let t = &params.turbine;
    let pm = &params.pmsg;
    let lambda = optimal_tip_speed_ratio(t.theta_t);
    let omega_m = lambda * v_wind / t.r_t * t.gear_k;
    let p = wtg_power_reference(omega_m, params);
    let i_sq = -p / omega_m / (1.5 * t.pole_pairs_p as f64 * pm.psi);
    let x2 = pm.r_s * i_sq + t.pole_pairs_p as f64 * omega_m * pm.psi;
    WtgState { i_sd: 0.0, i_sq, omega_m, x1: i_sq, x2, x3: 0.0 }
}

/// Damped Newton solve of the six turbine derivatives at zero supplementary input.
pub fn find_equilibrium(
    params: &WtgParams,
    v_wind: f64,
    initial_guess: &WtgState,
    opts: &NewtonOptions,
) -> Result<Equilibrium> {
    if !(initial_guess.omega_m > 0.0) {
        return Err(Error::Domain { quantity: "omega_m", value: initial_guess.omega_m });
    }
    let u = 0.0;
    let mut x = initial_guess.to_array().to_vec();
    let mut f = wtg_residual(&x, u, v_wind, params)?;
    let mut res = max_norm(&f);
    let mut iterations = 0;
    while res > opts.tolerance {
        if iterations >= opts.max_iterations {
            return Err(Error::NoConvergence {
                context: "equilibrium Newton",
                iterations,
                residual: res,
            });
        }
        iterations += 1;
        let steps: Vec<f64> = x.iter().map(|v| difference_step(*v, 1e-6)).collect();
        let jac = jacobian(|z| wtg_residual(z, u, v_wind, params), &x, &steps)?;
        let dx = Lu::new(&jac)?.solve_vec(&f);
        // Rows differ by orders of magnitude; backtrack on the row-scaled residual.
        let scale: Vec<f64> = (0..jac.nrows())
            .map(|i| {
                let m = jac.row_slice(i).iter().fold(0.0f64, |m, v| m.max(abs(*v)));
                if m > 0.0 { 1.0 / m } else { 1.0 }
            })
            .collect();
        let merit = |r: &[f64]| r.iter().zip(&scale).fold(0.0f64, |m, (v, s)| m.max(abs(v * s)));
        let current = merit(&f);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a - alpha * d).collect();
            if trial[WTG_OMEGA_INDEX] <= 0.0 {
                alpha *= 0.5;
                continue;
            }
            if let Ok(ft) = wtg_residual(&trial, u, v_wind, params) {
                if merit(&ft) < current {
                    res = max_norm(&ft);
                    x = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence {
                context: "equilibrium Newton line search",
                iterations,
                residual: res,
            });
        }
        if x[WTG_OMEGA_INDEX] <= 0.0 {
            return Err(Error::Domain { quantity: "omega_m", value: x[WTG_OMEGA_INDEX] });
        }
    }
    let x_eq = WtgState::from_slice(&x);
    let p_ref = wtg_power_reference(x_eq.omega_m, params);
    let algebraics_eq = msc_algebraic_solve(&x_eq, u, p_ref, params)?;
    Ok(Equilibrium { x_eq, u_eq: u, algebraics_eq, v_wind, iterations, residual: res })
}

/// Six-state turbine model in SI units: input `u_ie` (W), output `P_gen` (W).
pub fn linearize_wtg(
    params: &WtgParams,
    eq: &Equilibrium,
    opts: &LinearizeOptions,
) -> Result<StateSpaceModel> {
    let f = |x: &[f64], u: f64| -> Result<(Vec<f64>, Vec<f64>)> {
        let (d, alg) = wtg_derivative(&WtgState::from_slice(x), u, eq.v_wind, params)?;
        Ok((d.to_array().to_vec(), vec![alg.p_gen()]))
    };
    let (a, b, c, d) = linearize(f, &eq.x_eq.to_array(), eq.u_eq, opts)?;
    StateSpaceModel::new(a, b, Matrix::zeros(6, 0), c, d, &WTG_STATE_NAMES, &["u_ie"], &["p_gen"])
}

/// Rescales the turbine model so that the rotor speed is in per-unit
/// electrical speed and input and output powers are in per unit of `s_base`.
/// The electrical and controller states keep their SI units.
pub fn wtg_to_per_unit(model: &StateSpaceModel, base: &BaseUnits, pole_pairs: u32) -> StateSpaceModel {
    let n = model.n_states();
    let mut t = vec![1.0; n];
    t[WTG_OMEGA_INDEX] = base.mech_speed_to_pu(1.0, pole_pairs);
    let a = Matrix::from_fn(n, n, |i, j| t[i] * model.a[(i, j)] / t[j]);
    let b = Matrix::from_fn(n, model.b.ncols(), |i, j| t[i] * model.b[(i, j)] * base.s_base);
    let c = Matrix::from_fn(model.c.nrows(), n, |i, j| model.c[(i, j)] / t[j] / base.s_base);
    let mut out = model.clone();
    out.a = a;
    out.b = b;
    out.c = c;
    out
}

/// Diesel swing/engine/governor model in per unit with input `ΔP_e,d`.
pub fn diesel_state_space(p: &DieselParams) -> StateSpaceModel {
    let a = Matrix::from_rows(&[
        &[0.0, 1.0 / p.m_d, 0.0],
        &[0.0, -1.0 / p.tau_d, 1.0 / p.tau_d],
        &[-1.0 / (p.r_d * p.tau_sm), 0.0, -1.0 / p.tau_sm],
    ]);
    let b = Matrix::column(&[-1.0 / p.m_d, 0.0, 0.0]);
    StateSpaceModel {
        a,
        b,
        e: Matrix::zeros(3, 0),
        c: Matrix::row(&[1.0, 0.0, 0.0]),
        d: Matrix::zeros(1, 1),
        state_names: ["d_omega_d", "d_p_m", "d_p_v"].iter().map(|s| s.to_string()).collect(),
        input_names: ["d_p_ed".to_string()].to_vec(),
        output_names: ["d_omega_d".to_string()].to_vec(),
    }
}
