//! Nonlinear subsystem models: diesel mechanical dynamics, the wind turbine
//! with PMSG and machine-side converter control, the grid-side L filter and
//! the reference frequency-response model.
//!
//! Frequency-side quantities (diesel, reference) are in per unit of
//! [`BaseUnits`]; turbine-side quantities are in SI units.
//!
//! The stator equations use the motor convention, so a generating machine
//! has negative `i_sq`, negative electric torque and negative `p_e`. The
//! turbine torque enters the swing row as `T_m = -P_t / ω_m`, which makes a
//! positive-speed equilibrium exist with the swing row exactly as printed.

use alloc::format;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(cond: bool, prefix: &str, field: &str, reason: &'static str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter { field: format!("{prefix}.{field}"), reason })
    }
}

fn positive(v: f64, prefix: &str, field: &str) -> Result<()> {
    check(v.is_finite() && v > 0.0, prefix, field, "must be finite and > 0")
}

fn non_negative(v: f64, prefix: &str, field: &str) -> Result<()> {
    check(v.is_finite() && v >= 0.0, prefix, field, "must be finite and >= 0")
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct BaseUnits {
    /// Apparent power base (VA).
    pub s_base: f64,
    /// Nominal electrical angular frequency (rad/s).
    pub omega_base: f64,
}

impl BaseUnits {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        positive(self.s_base, prefix, "s_base")?;
        positive(self.omega_base, prefix, "omega_base")
    }

    /// Mechanical speed deviation (rad/s) to per-unit electrical speed.
    pub fn mech_speed_to_pu(&self, d_omega_m: f64, pole_pairs: u32) -> f64 {
        d_omega_m * pole_pairs as f64 / self.omega_base
    }

    pub fn pu_to_mech_speed(&self, pu: f64, pole_pairs: u32) -> f64 {
        pu * self.omega_base / pole_pairs as f64
    }

    pub fn power_to_pu(&self, watts: f64) -> f64 {
        watts / self.s_base
    }

    pub fn pu_to_power(&self, pu: f64) -> f64 {
        pu * self.s_base
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct DieselParams {
    /// Inertia coefficient `M_d = 2H` (s).
    pub m_d: f64,
    pub tau_d: f64,
    pub tau_sm: f64,
    /// Droop (pu).
    pub r_d: f64,
}

impl DieselParams {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        positive(self.m_d, prefix, "m_d")?;
        positive(self.tau_d, prefix, "tau_d")?;
        positive(self.tau_sm, prefix, "tau_sm")?;
        positive(self.r_d, prefix, "r_d")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DieselState {
    pub d_omega_d: f64,
    pub d_p_m: f64,
    pub d_p_v: f64,
}

impl DieselState {
    pub fn to_array(self) -> [f64; 3] {
        [self.d_omega_d, self.d_p_m, self.d_p_v]
    }

    pub fn from_array(x: [f64; 3]) -> Self {
        DieselState { d_omega_d: x[0], d_p_m: x[1], d_p_v: x[2] }
    }
}

/// Swing, engine and governor rows driven by the diesel electric power deviation.
pub fn diesel_rhs(state: DieselState, d_p_ed: f64, params: &DieselParams) -> Result<DieselState> {
    if !(state.to_array().iter().all(|v| v.is_finite()) && d_p_ed.is_finite()) {
        return Err(Error::NonFinite { context: "diesel state" });
    }
    Ok(DieselState {
        d_omega_d: (state.d_p_m - d_p_ed) / params.m_d,
        d_p_m: (state.d_p_v - state.d_p_m) / params.tau_d,
        d_p_v: (-state.d_p_v - state.d_omega_d / params.r_d) / params.tau_sm,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct TurbineParams {
    /// Air density (kg/m³).
    pub rho: f64,
    /// Blade radius (m).
    pub r_t: f64,
    /// MPPT coefficient (W·s³/rad³).
    pub c_opt: f64,
    pub gear_k: f64,
    pub pole_pairs_p: u32,
    /// Pitch angle (deg).
    pub theta_t: f64,
}

impl TurbineParams {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        positive(self.rho, prefix, "rho")?;
        positive(self.r_t, prefix, "r_t")?;
        positive(self.c_opt, prefix, "c_opt")?;
        positive(self.gear_k, prefix, "gear_k")?;
        check(self.pole_pairs_p > 0, prefix, "pole_pairs_p", "must be a positive integer")?;
        check(self.theta_t.is_finite() && self.theta_t >= 0.0, prefix, "theta_t", "must be >= 0")
    }
}

/// Power coefficient, clamped at zero from below. At zero pitch the
/// `0.003/(θ³-1)` term is taken at its limit `-0.003`.
pub fn power_coefficient(lambda: f64, theta: f64) -> f64 {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return 0.0;
    }
    let inv_li = if theta == 0.0 {
        1.0 / lambda + 0.003
    } else {
        1.0 / (lambda - 0.02 * theta) - 0.003 / (theta * theta * theta - 1.0)
    };
    let cp = 0.73
        * (151.0 * inv_li - 0.58 * theta - 0.002 * libm::pow(theta, 2.14) - 13.2)
        * libm::exp(-18.4 * inv_li);
    if cp.is_finite() { cp.max(0.0) } else { 0.0 }
}

pub fn tip_speed_ratio(v_wind: f64, omega_t: f64, params: &TurbineParams) -> f64 {
    omega_t * params.r_t / v_wind
}

/// Aerodynamic power (W) captured at turbine speed `omega_t` (rad/s).
pub fn turbine_power(v_wind: f64, omega_t: f64, params: &TurbineParams) -> Result<f64> {
    if !(v_wind.is_finite() && v_wind > 0.0) {
        return Err(Error::Domain { quantity: "v_wind", value: v_wind });
    }
    if !(omega_t.is_finite() && omega_t >= 0.0) {
        return Err(Error::Domain { quantity: "omega_t", value: omega_t });
    }
    let lambda = tip_speed_ratio(v_wind, omega_t, params);
    let swept = 0.5 * params.rho * core::f64::consts::PI * params.r_t * params.r_t;
    Ok(swept * v_wind * v_wind * v_wind * power_coefficient(lambda, params.theta_t))
}

pub fn mppt_reference(omega_t: f64, c_opt: f64) -> f64 {
    c_opt * omega_t * omega_t * omega_t
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct PmsgParams {
    pub r_s: f64,
    pub l_d: f64,
    pub l_q: f64,
    pub psi: f64,
    pub m_inertia: f64,
    pub f_friction: f64,
}

impl PmsgParams {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        non_negative(self.r_s, prefix, "r_s")?;
        positive(self.l_d, prefix, "l_d")?;
        positive(self.l_q, prefix, "l_q")?;
        positive(self.psi, prefix, "psi")?;
        positive(self.m_inertia, prefix, "m_inertia")?;
        non_negative(self.f_friction, prefix, "f_friction")
    }
}

/// Which gain multiplies the power error inside the q-current integrator row.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum QLoopIntegratorGain {
    /// `K_p1`, consistent with the algebraic q-voltage row of the cascade.
    #[default]
    Cascaded,
    /// `K_i1` as typeset.
    Printed,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct MscGains {
    pub kp1: f64,
    pub ki1: f64,
    pub kp2: f64,
    pub ki2: f64,
    pub kp3: f64,
    pub ki3: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub q_integrator_gain: QLoopIntegratorGain,
}

impl MscGains {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        positive(self.kp1, prefix, "kp1")?;
        positive(self.ki1, prefix, "ki1")?;
        positive(self.kp2, prefix, "kp2")?;
        positive(self.ki2, prefix, "ki2")?;
        positive(self.kp3, prefix, "kp3")?;
        positive(self.ki3, prefix, "ki3")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WtgParams {
    pub turbine: TurbineParams,
    pub pmsg: PmsgParams,
    pub msc: MscGains,
}

impl WtgParams {
    pub fn validate(&self) -> Result<()> {
        self.turbine.validate("turbine")?;
        self.pmsg.validate("pmsg")?;
        self.msc.validate("msc")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WtgState {
    pub i_sd: f64,
    pub i_sq: f64,
    pub omega_m: f64,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
}

pub const WTG_STATE_NAMES: [&str; 6] = ["i_sd", "i_sq", "omega_m", "x1", "x2", "x3"];
pub const WTG_OMEGA_INDEX: usize = 2;

impl WtgState {
    pub fn to_array(self) -> [f64; 6] {
        [self.i_sd, self.i_sq, self.omega_m, self.x1, self.x2, self.x3]
    }

    pub fn from_array(x: [f64; 6]) -> Self {
        WtgState { i_sd: x[0], i_sq: x[1], omega_m: x[2], x1: x[3], x2: x[4], x3: x[5] }
    }

    pub fn from_slice(x: &[f64]) -> Self {
        WtgState { i_sd: x[0], i_sq: x[1], omega_m: x[2], x1: x[3], x2: x[4], x3: x[5] }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WtgAlgebraics {
    pub v_sd: f64,
    pub v_sq: f64,
    /// Stator electric power, motor convention (W).
    pub p_e: f64,
    /// Electric torque, motor convention (N·m).
    pub t_e: f64,
    /// Power-loop error `P_cmd - P_e` (W), with `P_cmd = -(p_ref + u_ie)`.
    pub power_error: f64,
}

impl WtgAlgebraics {
    /// Power delivered by the generator (W).
    pub fn p_gen(&self) -> f64 {
        -self.p_e
    }
}

/// Solves the three algebraic rows of the converter control for
/// `(v_sd, v_sq, P_e)`.
///
/// `p_ref` and `u_ie` are in the generator frame (positive = delivered); the
/// loop acts on the motor-frame command `P_cmd = -(p_ref + u_ie)`.
pub fn msc_algebraic_solve(
    state: &WtgState,
    u_ie: f64,
    p_ref: f64,
    params: &WtgParams,
) -> Result<WtgAlgebraics> {
    if !(state.to_array().iter().all(|v| v.is_finite()) && u_ie.is_finite() && p_ref.is_finite()) {
        return Err(Error::NonFinite { context: "converter algebraic solve" });
    }
    let pm = &params.pmsg;
    let g = &params.msc;
    let p = params.turbine.pole_pairs_p as f64;
    let we = p * state.omega_m;
    let p_cmd = -(p_ref + u_ie);

    let v_sd = -pm.l_q * we * state.i_sq + state.x3 - g.kp3 * state.i_sd;
    let a = pm.l_d * we * state.i_sd + state.x2 + g.kp2 * (state.x1 - state.i_sq);
    let k = g.kp2 * g.kp1;
    // v_sq = a + k (P_cmd - P_e) substituted into P_e = 1.5 (v_sd i_sd + v_sq i_sq).
    let den = 1.0 + 1.5 * k * state.i_sq;
    if libm::fabs(den) < 1e-12 {
        return Err(Error::Singular { context: "converter algebraic rows" });
    }
    let p_e = (1.5 * v_sd * state.i_sd + 1.5 * state.i_sq * (a + k * p_cmd)) / den;
    let v_sq = a + k * (p_cmd - p_e);
    let t_e = 1.5 * p * (pm.psi * state.i_sq + (pm.l_d - pm.l_q) * state.i_sd * state.i_sq);
    Ok(WtgAlgebraics { v_sd, v_sq, p_e, t_e, power_error: p_cmd - p_e })
}

/// Residuals of the three algebraic rows at a candidate solution.
pub fn msc_algebraic_residual(
    state: &WtgState,
    alg: &WtgAlgebraics,
    u_ie: f64,
    p_ref: f64,
    params: &WtgParams,
) -> [f64; 3] {
    let pm = &params.pmsg;
    let g = &params.msc;
    let we = params.turbine.pole_pairs_p as f64 * state.omega_m;
    let p_cmd = -(p_ref + u_ie);
    [
        -alg.v_sd - pm.l_q * we * state.i_sq + state.x3 - g.kp3 * state.i_sd,
        -alg.v_sq
            + pm.l_d * we * state.i_sd
            + state.x2
            + g.kp2 * (g.kp1 * (p_cmd - alg.p_e) + state.x1 - state.i_sq),
        -alg.p_e + 1.5 * (alg.v_sd * state.i_sd + alg.v_sq * state.i_sq),
    ]
}

/// Generator-frame MPPT power reference at mechanical speed `omega_m`.
pub fn wtg_power_reference(omega_m: f64, params: &WtgParams) -> f64 {
    mppt_reference(omega_m / params.turbine.gear_k, params.turbine.c_opt)
}

/// Time derivative of the six turbine states given solved algebraics.
pub fn wtg_rhs(
    state: &WtgState,
    alg: &WtgAlgebraics,
    v_wind: f64,
    params: &WtgParams,
) -> Result<WtgState> {
    if !(state.omega_m.is_finite() && state.omega_m > 0.0) {
        return Err(Error::Domain { quantity: "omega_m", value: state.omega_m });
    }
    let pm = &params.pmsg;
    let g = &params.msc;
    let p = params.turbine.pole_pairs_p as f64;
    let we = p * state.omega_m;
    let p_t = turbine_power(v_wind, state.omega_m / params.turbine.gear_k, &params.turbine)?;
    let t_m = -p_t / state.omega_m;
    let e = alg.power_error;
    let inner = match g.q_integrator_gain {
        QLoopIntegratorGain::Cascaded => g.kp1,
        QLoopIntegratorGain::Printed => g.ki1,
    };
    Ok(WtgState {
        i_sd: -pm.r_s / pm.l_d * state.i_sd + we * pm.l_q / pm.l_d * state.i_sq + alg.v_sd / pm.l_d,
        i_sq: -pm.r_s / pm.l_q * state.i_sq
            - we * (pm.l_d / pm.l_q * state.i_sd + pm.psi / pm.l_q)
            + alg.v_sq / pm.l_q,
        omega_m: (alg.t_e - t_m - pm.f_friction * state.omega_m) / pm.m_inertia,
        x1: g.ki1 * e,
        x2: g.ki2 * (inner * e + state.x1 - state.i_sq),
        x3: -g.ki3 * state.i_sd,
    })
}

/// Algebraic solve followed by the state derivative, with the MPPT reference
/// evaluated at the current rotor speed.
pub fn wtg_derivative(
    state: &WtgState,
    u_ie: f64,
    v_wind: f64,
    params: &WtgParams,
) -> Result<(WtgState, WtgAlgebraics)> {
    if !(state.omega_m.is_finite() && state.omega_m > 0.0) {
        return Err(Error::Domain { quantity: "omega_m", value: state.omega_m });
    }
    let p_ref = wtg_power_reference(state.omega_m, params);
    let alg = msc_algebraic_solve(state, u_ie, p_ref, params)?;
    Ok((wtg_rhs(state, &alg, v_wind, params)?, alg))
}

/// Sign of the `ω i_ld` term in the q-axis filter row.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum FilterCoupling {
    /// `+ω i_ld`, as typeset.
    #[default]
    Printed,
    /// `-ω i_ld`, the usual rotating-frame cross coupling.
    Standard,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct FilterParams {
    pub r_f: f64,
    pub l_f: f64,
    pub omega_grid: f64,
    pub v_od: f64,
    pub v_oq: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub coupling: FilterCoupling,
}

impl FilterParams {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        non_negative(self.r_f, prefix, "r_f")?;
        positive(self.l_f, prefix, "l_f")?;
        check(self.omega_grid.is_finite(), prefix, "omega_grid", "must be finite")?;
        check(self.v_od.is_finite(), prefix, "v_od", "must be finite")?;
        check(self.v_oq.is_finite(), prefix, "v_oq", "must be finite")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FilterState {
    pub i_ld: f64,
    pub i_lq: f64,
}

pub fn filter_rhs(state: FilterState, v_gd: f64, v_gq: f64, params: &FilterParams) -> FilterState {
    let r = params.r_f / params.l_f;
    let w = params.omega_grid;
    let cross = match params.coupling {
        FilterCoupling::Printed => w * state.i_ld,
        FilterCoupling::Standard => -w * state.i_ld,
    };
    FilterState {
        i_ld: -r * state.i_ld + w * state.i_lq - params.v_od / params.l_f + v_gd / params.l_f,
        i_lq: -r * state.i_lq + cross - params.v_oq / params.l_f + v_gq / params.l_f,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct ReferenceParams {
    /// Desired inertia coefficient `M_r = 2H_r` (s).
    pub m_r: f64,
    pub d_r: f64,
    pub r_r: f64,
    pub tau_dr: f64,
    pub tau_smr: f64,
}

impl ReferenceParams {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        positive(self.m_r, prefix, "m_r")?;
        non_negative(self.d_r, prefix, "d_r")?;
        positive(self.r_r, prefix, "r_r")?;
        positive(self.tau_dr, prefix, "tau_dr")?;
        positive(self.tau_smr, prefix, "tau_smr")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ReferenceState {
    pub omega_hat: f64,
    pub p_m_hat: f64,
    pub p_v_hat: f64,
}

impl ReferenceState {
    pub fn to_array(self) -> [f64; 3] {
        [self.omega_hat, self.p_m_hat, self.p_v_hat]
    }
}

pub fn reference_model_rhs(
    state: ReferenceState,
    p_tilde_l: f64,
    params: &ReferenceParams,
) -> ReferenceState {
    ReferenceState {
        omega_hat: (state.p_m_hat - p_tilde_l - params.d_r * state.omega_hat) / params.m_r,
        p_m_hat: (state.p_v_hat - state.p_m_hat) / params.tau_dr,
        p_v_hat: (-state.p_v_hat - state.omega_hat / params.r_r) / params.tau_smr,
    }
}

/// Every physical and control constant of the microgrid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantParameters {
    pub base: BaseUnits,
    pub diesel: DieselParams,
    pub wtg: WtgParams,
    pub filter: FilterParams,
    pub reference: ReferenceParams,
}

impl PlantParameters {
    pub fn validate(&self) -> Result<()> {
        self.base.validate("base")?;
        self.diesel.validate("diesel")?;
        self.wtg.validate()?;
        self.filter.validate("filter")?;
        self.reference.validate("reference")
    }

    /// The values shipped in the companion crate's default configuration.
    ///
    /// Diesel, converter-gain and reference values follow the published test
    /// case; turbine, generator and filter constants are implementer-chosen
    /// so that a partial-load equilibrium exists at 12 m/s.
    pub fn reference_case() -> Self {
        PlantParameters {
            base: BaseUnits { s_base: 100e3, omega_base: 2.0 * core::f64::consts::PI * 60.0 },
            diesel: DieselParams { m_d: 4.0, tau_d: 0.5, tau_sm: 0.1, r_d: 0.03 },
            wtg: WtgParams {
                turbine: TurbineParams {
                    rho: 1.225,
                    r_t: 3.5,
                    c_opt: 1.1915,
                    gear_k: 3.5,
                    pole_pairs_p: 4,
                    theta_t: 0.0,
                },
                pmsg: PmsgParams {
                    r_s: 0.05,
                    l_d: 5e-3,
                    l_q: 5e-3,
                    psi: 1.2,
                    m_inertia: 60.0,
                    f_friction: 0.01,
                },
                msc: MscGains {
                    kp1: 1.0 / 64.0,
                    ki1: 1e-6,
                    kp2: 0.8,
                    ki2: 0.5,
                    kp3: 0.8,
                    ki3: 0.5,
                    q_integrator_gain: QLoopIntegratorGain::Cascaded,
                },
            },
            filter: FilterParams {
                r_f: 0.02,
                l_f: 2e-3,
                omega_grid: 2.0 * core::f64::consts::PI * 60.0,
                v_od: 400.0,
                v_oq: 0.0,
                coupling: FilterCoupling::Printed,
            },
            reference: ReferenceParams { m_r: 6.0, d_r: 0.0, r_r: 0.03, tau_dr: 0.5, tau_smr: 0.1 },
        }
    }
}
