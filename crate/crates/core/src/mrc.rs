//! Model-reference controller synthesis.
//!
//! The physical plant (diesel rows plus the reduced turbine) and the
//! reference frequency model are stacked into one augmented system whose
//! tracking error `e = Δω_d - ω̂` is bounded by a delay-dependent LMI. A
//! feasible certificate yields the state feedback `u_ie = K_p x_p + K_r x_r`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_complex::Complex64;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, sqrt, Matrix, SymmetricEigen};
use crate::linearization::StateSpaceModel;
use crate::lmi::{
    check_solution, minimize_max_eigenvalue, solve_feasibility, Assignment, LinearMatrixExpression, LmiBuilder,
    MarginReport, SolveStatus, SolverOptions,
};
use crate::plant::{BaseUnits, DieselParams, ReferenceParams};
use crate::sma::ReducedWtgModel;

pub const PLANT_STATES: [&str; 4] = ["d_omega_d", "d_p_m", "d_p_v", "d_omega_m"];
pub const REFERENCE_STATES: [&str; 3] = ["omega_hat", "p_m_hat", "p_v_hat"];

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct DelayBounds {
    /// Lower delay bound `η_m` (s).
    pub eta_m: f64,
    /// Upper delay bound `κ` (s).
    pub kappa: f64,
}

impl Default for DelayBounds {
    fn default() -> Self {
        DelayBounds { eta_m: 1e-3, kappa: 1e-2 }
    }
}

impl DelayBounds {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(self.eta_m.is_finite() && self.eta_m > 0.0) {
            return Err(Error::InvalidParameter { field: format!("{prefix}.eta_m"), reason: "must be finite and > 0" });
        }
        if !(self.kappa.is_finite() && self.kappa >= self.eta_m) {
            return Err(Error::InvalidParameter { field: format!("{prefix}.kappa"), reason: "must be finite and >= eta_m" });
        }
        Ok(())
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.eta_m + self.kappa)
    }
}

/// How the load disturbance enters the augmented system.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum DisturbanceChannel {
    /// One physical load signal drives plant and reference: `Ē = [E_p; E_r]`.
    #[default]
    Shared,
    /// Two formal channels: `Ē = blkdiag(E_p, E_r)`.
    Split,
}

/// Sign of the `Υ_i = M̄_i - 2P̄` diagonal blocks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum DelayBlockSign {
    /// `+Υ_1/η_m` and `+Υ_2/κ`, consistent with `-P̄M̄⁻¹P̄ ⪯ M̄ - 2P̄`.
    #[default]
    Bounded,
    /// `-Υ_1/η_m` and `-Υ_2/κ`.
    Printed,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct LmiOptions {
    #[cfg_attr(feature = "serde", serde(default))]
    pub channel: DisturbanceChannel,
    #[cfg_attr(feature = "serde", serde(default))]
    pub delay_sign: DelayBlockSign,
}

/// Physical plant with states `[Δω_d, ΔP_m, ΔP_v, Δω_m]`, input `u_ie`,
/// disturbance `ΔP_l` and output `Δω_d`.
pub fn assemble_plant(diesel: &DieselParams, reduced: &ReducedWtgModel, base: &BaseUnits) -> Result<StateSpaceModel> {
    if reduced.base != Some(*base) {
        return Err(Error::BaseMismatch);
    }
    let m = diesel.m_d;
    let a = Matrix::from_rows(&[
        &[0.0, 1.0 / m, 0.0, reduced.c_rd / m],
        &[0.0, -1.0 / diesel.tau_d, 1.0 / diesel.tau_d, 0.0],
        &[-1.0 / (diesel.r_d * diesel.tau_sm), 0.0, -1.0 / diesel.tau_sm, 0.0],
        &[0.0, 0.0, 0.0, reduced.a_rd],
    ]);
    let b = Matrix::column(&[reduced.d_rd / m, 0.0, 0.0, reduced.b_rd]);
    let e = Matrix::column(&[-1.0 / m, 0.0, 0.0, 0.0]);
    let c = Matrix::row(&[1.0, 0.0, 0.0, 0.0]);
    StateSpaceModel::new(a, b, e, c, Matrix::zeros(1, 1), &PLANT_STATES, &["u_ie"], &["d_omega_d"])
}

/// Reference frequency model with states `[ω̂, P̂_m, P̂_v]` driven by `P̃_l`.
pub fn assemble_reference(p: &ReferenceParams) -> StateSpaceModel {
    let a = Matrix::from_rows(&[
        &[-p.d_r / p.m_r, 1.0 / p.m_r, 0.0],
        &[0.0, -1.0 / p.tau_dr, 1.0 / p.tau_dr],
        &[-1.0 / (p.r_r * p.tau_smr), 0.0, -1.0 / p.tau_smr],
    ]);
    StateSpaceModel {
        a,
        b: Matrix::zeros(3, 0),
        e: Matrix::column(&[-1.0 / p.m_r, 0.0, 0.0]),
        c: Matrix::row(&[1.0, 0.0, 0.0]),
        d: Matrix::zeros(1, 0),
        state_names: REFERENCE_STATES.iter().map(|s| String::from(*s)).collect(),
        input_names: Vec::new(),
        output_names: alloc::vec![String::from("omega_hat")],
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedSystem {
    pub a_bar: Matrix,
    pub e_bar: Matrix,
    pub c_bar: Matrix,
    pub b_tilde: Matrix,
    pub d_p: Matrix,
    pub n_p: usize,
    pub n_r: usize,
    pub channel: DisturbanceChannel,
}

impl AugmentedSystem {
    pub fn n(&self) -> usize {
        self.n_p + self.n_r
    }

    pub fn n_w(&self) -> usize {
        self.e_bar.ncols()
    }

    /// `Ā + B̃ [K_p, K_r]`.
    pub fn closed_loop(&self, gains: &GainPair) -> Matrix {
        &self.a_bar + &(&self.b_tilde * &Matrix::row(&gains.to_vec()))
    }

    /// Disturbance input for one physical load signal.
    pub fn load_input(&self) -> Matrix {
        match self.channel {
            DisturbanceChannel::Shared => self.e_bar.clone(),
            DisturbanceChannel::Split => {
                Matrix::from_fn(self.n(), 1, |i, _| self.e_bar[(i, 0)] + self.e_bar[(i, 1)])
            }
        }
    }
}

pub fn augment(plant: &StateSpaceModel, reference: &StateSpaceModel, channel: DisturbanceChannel) -> Result<AugmentedSystem> {
    let (n_p, n_r) = (plant.n_states(), reference.n_states());
    if plant.b.ncols() != 1 || plant.e.ncols() != 1 || plant.c.nrows() != 1 {
        return Err(Error::DimensionMismatch { context: "plant input/disturbance/output", expected: 1, found: plant.b.ncols() });
    }
    if reference.e.ncols() != 1 || reference.c.nrows() != 1 {
        return Err(Error::DimensionMismatch { context: "reference disturbance/output", expected: 1, found: reference.e.ncols() });
    }
    let a_bar = Matrix::block_diag(&plant.a, &reference.a);
    let e_bar = match channel {
        DisturbanceChannel::Shared => Matrix::vstack(&plant.e, &reference.e),
        DisturbanceChannel::Split => Matrix::block_diag(&plant.e, &reference.e),
    };
    let c_bar = Matrix::hstack(&plant.c, &reference.c.scale(-1.0));
    let b_tilde = Matrix::vstack(&plant.b, &Matrix::zeros(n_r, 1));
    Ok(AugmentedSystem { a_bar, e_bar, c_bar, b_tilde, d_p: plant.d.clone(), n_p, n_r, channel })
}

/// Builds the delay-dependent tracking LMI at performance level `gamma`.
/// Block order is `[x, x(t-η), x(t-κ)-like, η-slack, κ-slack, w, e, ẋη, ẋκ]`
/// with sizes `[n, n, n, n, n, n_w, 1, n, n]`; side constraints on `P̄`,
/// `Q̄`, `M̄_1`, `M̄_2` follow.
pub fn build_lmi(
    aug: &AugmentedSystem,
    gamma: f64,
    delays: &DelayBounds,
    epsilon: f64,
    opts: &LmiOptions,
) -> LinearMatrixExpression {
    let n = aug.n();
    let nw = aug.n_w();
    let ne = aug.c_bar.nrows();
    let id = Matrix::identity(n);
    let a = &aug.a_bar;
    let at = a.transpose();
    let bt = &aug.b_tilde;
    let (eta, kap) = (delays.eta_m, delays.kappa);

    let mut b = LmiBuilder::new();
    let p = b.symmetric("P", n);
    let q = b.symmetric("Q", n);
    let m1 = b.symmetric("M1", n);
    let m2 = b.symmetric("M2", n);
    let u1 = b.full("U1", n, n);
    let u2 = b.full("U2", n, n);
    let v1 = b.full("V1", n, n);
    let v2 = b.full("V2", n, n);
    let k = b.full("K", 1, n);

    let c = b.constraint("tracking", &[n, n, n, n, n, nw, ne, n, n]);
    // Row 1
    b.add_term(c, 0, 0, a, p, false, &id, 1.0);
    b.add_term(c, 0, 0, &id, p, false, &at, 1.0);
    b.add_term(c, 0, 0, &id, q, false, &id, 1.0);
    b.add_term(c, 0, 0, &id, u1, true, &id, 1.0);
    b.add_term(c, 0, 0, &id, u1, false, &id, 1.0);
    b.add_term(c, 0, 1, &id, u1, false, &id, -1.0);
    b.add_term(c, 0, 1, &id, v1, true, &id, 1.0);
    b.add_term(c, 0, 2, bt, k, false, &id, 1.0);
    b.add_term(c, 0, 3, &id, u1, false, &id, 1.0);
    b.add_constant(c, 0, 5, &aug.e_bar);
    b.add_term(c, 0, 6, &id, p, false, &aug.c_bar.transpose(), 1.0);
    b.add_term(c, 0, 7, &id, p, false, &at, 1.0);
    b.add_term(c, 0, 8, &id, p, false, &at, 1.0);
    // Row 2
    b.add_term(c, 1, 1, &id, q, false, &id, -1.0);
    b.add_term(c, 1, 1, &id, v1, true, &id, -1.0);
    b.add_term(c, 1, 1, &id, v1, false, &id, -1.0);
    b.add_term(c, 1, 1, &id, u2, true, &id, 1.0);
    b.add_term(c, 1, 1, &id, u2, false, &id, 1.0);
    b.add_term(c, 1, 2, &id, u2, false, &id, -1.0);
    b.add_term(c, 1, 2, &id, v2, true, &id, 1.0);
    b.add_term(c, 1, 3, &id, v1, false, &id, 1.0);
    b.add_term(c, 1, 4, &id, u2, false, &id, 1.0);
    // Row 3
    b.add_term(c, 2, 2, &id, v2, true, &id, -1.0);
    b.add_term(c, 2, 2, &id, v2, false, &id, -1.0);
    b.add_term(c, 2, 4, &id, v2, false, &id, 1.0);
    b.add_term(c, 2, 6, &id, k, true, &aug.d_p.transpose(), 1.0);
    b.add_term(c, 2, 7, &id, k, true, &bt.transpose(), 1.0);
    b.add_term(c, 2, 8, &id, k, true, &bt.transpose(), 1.0);
    // Delay slack blocks
    let sign = match opts.delay_sign {
        DelayBlockSign::Bounded => 1.0,
        DelayBlockSign::Printed => -1.0,
    };
    b.add_term(c, 3, 3, &id, m1, false, &id, sign / eta);
    b.add_term(c, 3, 3, &id, p, false, &id, -2.0 * sign / eta);
    b.add_term(c, 4, 4, &id, m2, false, &id, sign / kap);
    b.add_term(c, 4, 4, &id, p, false, &id, -2.0 * sign / kap);
    // Performance rows
    b.add_constant(c, 5, 5, &Matrix::identity(nw).scale(-gamma * gamma));
    b.add_constant(c, 5, 7, &aug.e_bar.transpose());
    b.add_constant(c, 5, 8, &aug.e_bar.transpose());
    b.add_constant(c, 6, 6, &Matrix::identity(ne).scale(-1.0));
    b.add_term(c, 7, 7, &id, m1, false, &id, -1.0 / eta);
    b.add_term(c, 8, 8, &id, m2, false, &id, -1.0 / kap);

    let floor = id.scale(epsilon);
    let sp = b.constraint("P_positive", &[n]);
    b.add_term(sp, 0, 0, &id, p, false, &id, -1.0);
    b.add_constant(sp, 0, 0, &floor);
    let sq = b.constraint("Q_nonnegative", &[n]);
    b.add_term(sq, 0, 0, &id, q, false, &id, -1.0);
    let s1 = b.constraint("M1_positive", &[n]);
    b.add_term(s1, 0, 0, &id, m1, false, &id, -1.0);
    b.add_constant(s1, 0, 0, &floor);
    let s2 = b.constraint("M2_positive", &[n]);
    b.add_term(s2, 0, 0, &id, m2, false, &id, -1.0);
    b.add_constant(s2, 0, 0, &floor);
    b.build()
}

/// State-feedback gains in the exported ordering `[K_p | K_r]`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct GainPair {
    pub k_p: [f64; 4],
    pub k_r: [f64; 3],
}

impl GainPair {
    pub fn zero() -> Self {
        GainPair { k_p: [0.0; 4], k_r: [0.0; 3] }
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 7 {
            return Err(Error::DimensionMismatch { context: "gain vector", expected: 7, found: v.len() });
        }
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter { field: format!("gain[{i}]"), reason: "must be finite" });
        }
        Ok(GainPair { k_p: [v[0], v[1], v[2], v[3]], k_r: [v[4], v[5], v[6]] })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.k_p.iter().chain(self.k_r.iter()).copied().collect()
    }

    /// `u_ie = K_p x_p + K_r x_r`.
    pub fn control(&self, x_p: &[f64], x_r: &[f64]) -> f64 {
        self.k_p.iter().zip(x_p).map(|(k, x)| k * x).sum::<f64>() + self.k_r.iter().zip(x_r).map(|(k, x)| k * x).sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct SynthesisOptions {
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    /// Bisection stops once `γ_hi / γ_lo ≤ 1 + relative_width`.
    pub relative_width: f64,
    /// Condition number of `P̄` above which a warning is attached.
    pub condition_warning: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub lmi: LmiOptions,
    #[cfg_attr(feature = "serde", serde(default))]
    pub solver: SolverOptions,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            gamma_lo: 1e-3,
            gamma_hi: 50.0,
            relative_width: 1e-2,
            condition_warning: 1e10,
            lmi: LmiOptions::default(),
            solver: SolverOptions::default(),
        }
    }
}

impl SynthesisOptions {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let bad = |field: &str, reason| Error::InvalidParameter { field: format!("{prefix}.{field}"), reason };
        if !(self.gamma_lo.is_finite() && self.gamma_lo > 0.0) {
            return Err(bad("gamma_lo", "must be finite and > 0"));
        }
        if !(self.gamma_hi.is_finite() && self.gamma_hi > self.gamma_lo) {
            return Err(bad("gamma_hi", "must be finite and > gamma_lo"));
        }
        if !(self.relative_width.is_finite() && self.relative_width > 0.0) {
            return Err(bad("relative_width", "must be finite and > 0"));
        }
        if !(self.condition_warning.is_finite() && self.condition_warning > 1.0) {
            return Err(bad("condition_warning", "must be finite and > 1"));
        }
        self.solver.validate(&format!("{prefix}.solver"))
    }
}

/// Decision variables that certify a gain at a given `γ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub gamma: f64,
    pub delays: DelayBounds,
    pub lmi: LmiOptions,
    pub epsilon: f64,
    pub variables: Assignment,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct BisectionProbe {
    pub gamma: f64,
    pub feasible: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Synthesis {
    pub gains: GainPair,
    pub gamma: f64,
    pub certificate: Certificate,
    pub margin: MarginReport,
    pub p_condition: f64,
    pub warning: Option<String>,
    pub probes: Vec<BisectionProbe>,
}

fn probe(aug: &AugmentedSystem, gamma: f64, delays: &DelayBounds, opts: &SynthesisOptions) -> (bool, usize) {
    let expr = build_lmi(aug, gamma, delays, opts.solver.feasibility_margin, &opts.lmi);
    let sol = solve_feasibility(&expr, &opts.solver);
    (sol.status == SolveStatus::Feasible, sol.iterations)
}

/// `K = K̄ P̄⁻¹`.
pub fn recover_gain(variables: &Assignment) -> Result<GainPair> {
    let p = variables.get("P").ok_or_else(|| Error::MissingVariable("P".into()))?;
    let kbar = variables.get("K").ok_or_else(|| Error::MissingVariable("K".into()))?;
    let k = p.solve(&kbar.transpose())?;
    GainPair::from_slice(k.as_slice())
}

/// Bisects `γ` geometrically, then re-solves at the smallest feasible level
/// with full eigenvalue minimisation to obtain the returned certificate.
pub fn synthesize_gain(aug: &AugmentedSystem, delays: &DelayBounds, opts: &SynthesisOptions) -> Result<Synthesis> {
    delays.validate("delays")?;
    opts.validate("synthesis")?;
    if aug.n() != 7 {
        return Err(Error::DimensionMismatch { context: "augmented state", expected: 7, found: aug.n() });
    }
    let mut probes = Vec::new();
    let (mut lo, mut hi) = (opts.gamma_lo, opts.gamma_hi);
    let (ok, it) = probe(aug, hi, delays, opts);
    probes.push(BisectionProbe { gamma: hi, feasible: ok, iterations: it });
    if !ok {
        return Err(Error::Infeasible { gamma: hi });
    }
    let (ok, it) = probe(aug, lo, delays, opts);
    probes.push(BisectionProbe { gamma: lo, feasible: ok, iterations: it });
    if ok {
        hi = lo;
    }
    while hi / lo > 1.0 + opts.relative_width {
        let mid = sqrt(lo * hi);
        let (ok, it) = probe(aug, mid, delays, opts);
        probes.push(BisectionProbe { gamma: mid, feasible: ok, iterations: it });
        if ok {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let gamma = hi;
    let expr = build_lmi(aug, gamma, delays, opts.solver.feasibility_margin, &opts.lmi);
    let mut sol = minimize_max_eigenvalue(&expr, &opts.solver);
    if sol.status != SolveStatus::Feasible {
        sol = solve_feasibility(&expr, &opts.solver);
    }
    if sol.status != SolveStatus::Feasible {
        return Err(Error::NoConvergence { context: "certificate at final gamma", iterations: sol.iterations, residual: sol.max_eigenvalue });
    }
    let variables = expr.to_assignment(&sol.y);
    let margin = check_solution(&expr, &variables, sol.epsilon)?;
    let gains = recover_gain(&variables)?;
    let pe = SymmetricEigen::new(&variables["P"])?.values;
    let p_condition = pe[pe.len() - 1] / pe[0];
    let warning = (p_condition > opts.condition_warning)
        .then(|| format!("P condition number {p_condition:.3e} exceeds {:.1e}", opts.condition_warning));
    Ok(Synthesis {
        gains,
        gamma,
        certificate: Certificate { gamma, delays: *delays, lmi: opts.lmi, epsilon: sol.epsilon, variables },
        margin,
        p_condition,
        warning,
        probes,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosedLoopReport {
    /// Eigenvalues of `Ā + B̃[K_p, K_r]` (zero delay).
    pub eigenvalues: Vec<Complex64>,
    pub stable: bool,
    /// Re-substituted LMI margin when a certificate is supplied.
    pub margin: Option<MarginReport>,
    /// Steady-state `e = Δω_d - ω̂` for a unit load step.
    pub dc_tracking_error: f64,
}

pub fn validate_closed_loop(aug: &AugmentedSystem, gains: &GainPair, certificate: Option<&Certificate>) -> Result<ClosedLoopReport> {
    let acl = aug.closed_loop(gains);
    let eig = eigenvalues(&acl)?;
    let stable = eig.iter().all(|l| l.re < 0.0);
    let dc_tracking_error = match acl.solve(&aug.load_input()) {
        Ok(x) => -(&aug.c_bar * &x)[(0, 0)],
        Err(_) => f64::NAN,
    };
    let margin = match certificate {
        Some(c) => {
            let expr = build_lmi(aug, c.gamma, &c.delays, c.epsilon, &c.lmi);
            Some(check_solution(&expr, &c.variables, c.epsilon)?)
        }
        None => None,
    };
    Ok(ClosedLoopReport { eigenvalues: eig, stable, margin, dc_tracking_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{diesel_rhs, reference_model_rhs, DieselState, PlantParameters, ReferenceState};

    fn reduced() -> ReducedWtgModel {
        ReducedWtgModel {
            a_rd: -0.0997,
            b_rd: -0.2065,
            c_rd: 0.486,
            d_rd: 1.0,
            lambda_r: -0.0997,
            base: Some(PlantParameters::reference_case().base),
        }
    }

    fn system() -> AugmentedSystem {
        let p = PlantParameters::reference_case();
        let plant = assemble_plant(&p.diesel, &reduced(), &p.base).unwrap();
        augment(&plant, &assemble_reference(&p.reference), DisturbanceChannel::Shared).unwrap()
    }

    #[test]
    fn plant_without_turbine_path_matches_diesel_rows() {
        let p = PlantParameters::reference_case();
        let mut r = reduced();
        r.c_rd = 0.0;
        r.d_rd = 0.0;
        let plant = assemble_plant(&p.diesel, &r, &p.base).unwrap();
        let x = [0.01, -0.02, 0.03];
        let w = 0.3;
        let d = diesel_rhs(DieselState::from_array(x), w, &p.diesel).unwrap().to_array();
        let lin = &plant.a.mul_vec(&[x[0], x[1], x[2], 0.7]);
        for i in 0..3 {
            assert!((lin[i] + plant.e[(i, 0)] * w - d[i]).abs() < 1e-14);
        }
        assert_eq!(plant.e.as_slice(), &[-1.0 / p.diesel.m_d, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn base_mismatch_is_rejected() {
        let p = PlantParameters::reference_case();
        let mut r = reduced();
        r.base = None;
        assert_eq!(assemble_plant(&p.diesel, &r, &p.base), Err(Error::BaseMismatch));
    }

    #[test]
    fn reference_matrices_match_rhs() {
        let p = PlantParameters::reference_case().reference;
        let r = assemble_reference(&p);
        let x = [0.002, -0.1, 0.05];
        let d = reference_model_rhs(ReferenceState { omega_hat: x[0], p_m_hat: x[1], p_v_hat: x[2] }, 0.3, &p).to_array();
        let lin = r.a.mul_vec(&x);
        for i in 0..3 {
            assert!((lin[i] + r.e[(i, 0)] * 0.3 - d[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_variables_leave_only_constant_blocks() {
        let aug = system();
        let expr = build_lmi(&aug, 0.5, &DelayBounds::default(), 1e-7, &LmiOptions::default());
        let f = expr.evaluate(&alloc::vec![0.0; expr.n_scalars()]);
        let main = &f[0];
        assert_eq!(main.nrows(), 51);
        assert_eq!(main[(35, 35)], -0.25);
        assert_eq!(main[(36, 36)], -1.0);
        assert_eq!(main[(0, 35)], -0.25);
        assert_eq!(main[(35, 37)], -0.25);
        assert_eq!(main[(0, 0)], 0.0);
        assert_eq!(expr.n_scalars(), 315);
    }

    #[test]
    fn zero_gain_closed_loop_equals_open_loop() {
        let p = PlantParameters::reference_case();
        let mut reference = p.reference;
        reference.r_r = 0.05;
        let plant = assemble_plant(&p.diesel, &reduced(), &p.base).unwrap();
        let aug = augment(&plant, &assemble_reference(&reference), DisturbanceChannel::Shared).unwrap();
        assert_eq!(aug.closed_loop(&GainPair::zero()), aug.a_bar);
        let rep = validate_closed_loop(&aug, &GainPair::zero(), None).unwrap();
        assert!(rep.stable);
        assert!((rep.dc_tracking_error - 0.02).abs() < 1e-12);
    }

    #[test]
    fn gain_round_trip() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        assert_eq!(GainPair::from_slice(&v).unwrap().to_vec(), v.to_vec());
        assert!(GainPair::from_slice(&v[..6]).is_err());
    }
}
