//! Selective modal analysis: keep the rotor-speed state, condense the rest
//! algebraically at the eigenvalue of the mode it participates in most.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{abs, complex_inverse, expm, sqrt, Eigen, Matrix};
use crate::linearization::{
    default_initial_guess, find_equilibrium, linearize_wtg, wtg_to_per_unit, Equilibrium, LinearizeOptions,
    NewtonOptions, StateSpaceModel,
};
use crate::plant::{BaseUnits, PlantParameters, WTG_OMEGA_INDEX};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct SmaOptions {
    /// Upper bound on the eigenvector-basis condition estimate.
    pub condition_bound: f64,
    /// Relative imaginary part above which a selected mode counts as complex.
    pub complex_tolerance: f64,
}

impl Default for SmaOptions {
    fn default() -> Self {
        SmaOptions { condition_bound: 1e8, complex_tolerance: 1e-9 }
    }
}

#[derive(Clone, Debug)]
pub struct Participation {
    pub eigenvalues: Vec<Complex64>,
    /// `|p_ki|`, rows are states and columns are modes.
    pub magnitudes: Matrix,
    /// Signed factors `p_ki = v_ki w_ik`, row-major `n × n`.
    pub signed: Vec<Complex64>,
    /// `‖V‖_F ‖V⁻¹‖_F` with unit-norm eigenvector columns.
    pub condition: f64,
}

pub fn participation_factors(a: &Matrix, opts: &SmaOptions) -> Result<Participation> {
    let eig = Eigen::new(a)?;
    let n = a.nrows();
    let mut v = vec![Complex64::new(0.0, 0.0); n * n];
    for (i, col) in eig.vectors.iter().enumerate() {
        for k in 0..n {
            v[k * n + i] = col[k];
        }
    }
    let w = match complex_inverse(&v, n) {
        Ok(w) => w,
        Err(_) => {
            return Err(Error::IllConditioned { condition: f64::INFINITY, bound: opts.condition_bound })
        }
    };
    let fro = |m: &[Complex64]| sqrt(m.iter().map(|z| z.norm_sqr()).sum());
    let condition = fro(&v) * fro(&w);
    if !(condition <= opts.condition_bound) {
        return Err(Error::IllConditioned { condition, bound: opts.condition_bound });
    }
    let mut signed = vec![Complex64::new(0.0, 0.0); n * n];
    let mut magnitudes = Matrix::zeros(n, n);
    for k in 0..n {
        for i in 0..n {
            let p = v[k * n + i] * w[i * n + k];
            signed[k * n + i] = p;
            magnitudes[(k, i)] = p.norm();
        }
    }
    Ok(Participation { eigenvalues: eig.values, magnitudes, signed, condition })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelevantMode {
    pub mode_index: usize,
    pub lambda: f64,
    pub participation: f64,
}

/// Mode in which `state_index` participates most; ties go to the slowest mode.
pub fn select_relevant_mode(a: &Matrix, state_index: usize, opts: &SmaOptions) -> Result<RelevantMode> {
    let n = a.nrows();
    if state_index >= n {
        return Err(Error::IndexOutOfRange { index: state_index, len: n });
    }
    let pf = participation_factors(a, opts)?;
    let mut best = 0;
    for i in 1..n {
        let pi = pf.magnitudes[(state_index, i)];
        let pb = pf.magnitudes[(state_index, best)];
        let tie = abs(pi - pb) <= 1e-12 * pb.max(1e-300);
        if (pi > pb && !tie) || (tie && abs(pf.eigenvalues[i].re) < abs(pf.eigenvalues[best].re)) {
            best = i;
        }
    }
    let lambda = pf.eigenvalues[best];
    if abs(lambda.im) > opts.complex_tolerance * lambda.norm().max(1.0) {
        return Err(Error::ComplexMode { re: lambda.re, im: lambda.im });
    }
    Ok(RelevantMode { mode_index: best, lambda: lambda.re, participation: pf.magnitudes[(state_index, best)] })
}

/// Model blocks with the relevant state moved to the front.
#[derive(Clone, Debug, PartialEq)]
pub struct ModePartition {
    pub relevant_index: usize,
    pub a11: f64,
    pub a12: Matrix,
    pub a21: Matrix,
    pub a22: Matrix,
    pub b_r: f64,
    pub b_z: Matrix,
    pub c_r: f64,
    pub c_z: Matrix,
    pub d: f64,
}

fn others(n: usize, r: usize) -> Vec<usize> {
    (0..n).filter(|&i| i != r).collect()
}

pub fn partition(model: &StateSpaceModel, relevant_index: usize) -> Result<ModePartition> {
    let n = model.n_states();
    if relevant_index >= n {
        return Err(Error::IndexOutOfRange { index: relevant_index, len: n });
    }
    if model.b.ncols() != 1 || model.c.nrows() != 1 {
        return Err(Error::DimensionMismatch {
            context: "single-input single-output partition",
            expected: 1,
            found: model.b.ncols().max(model.c.nrows()),
        });
    }
    let z = others(n, relevant_index);
    let r = [relevant_index];
    Ok(ModePartition {
        relevant_index,
        a11: model.a[(relevant_index, relevant_index)],
        a12: model.a.select_rows(&r).select_cols(&z),
        a21: model.a.select_rows(&z).select_cols(&r),
        a22: model.a.select_rows(&z).select_cols(&z),
        b_r: model.b[(relevant_index, 0)],
        b_z: model.b.select_rows(&z),
        c_r: model.c[(0, relevant_index)],
        c_z: model.c.select_cols(&z),
        d: model.d[(0, 0)],
    })
}

impl ModePartition {
    /// `(A, B, C, D)` in the original state order.
    pub fn reassemble(&self) -> (Matrix, Matrix, Matrix, Matrix) {
        let n = self.a22.nrows() + 1;
        let r = self.relevant_index;
        let z = others(n, r);
        let mut a = Matrix::zeros(n, n);
        let mut b = Matrix::zeros(n, 1);
        let mut c = Matrix::zeros(1, n);
        a[(r, r)] = self.a11;
        b[(r, 0)] = self.b_r;
        c[(0, r)] = self.c_r;
        for (p, &i) in z.iter().enumerate() {
            a[(r, i)] = self.a12[(0, p)];
            a[(i, r)] = self.a21[(p, 0)];
            b[(i, 0)] = self.b_z[(p, 0)];
            c[(0, i)] = self.c_z[(0, p)];
            for (q, &j) in z.iter().enumerate() {
                a[(i, j)] = self.a22[(p, q)];
            }
        }
        (a, b, c, Matrix::from_rows(&[&[self.d]]))
    }
}

/// Scalar reduced turbine model with input `u_ie` and output `ΔP_gen`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ReducedWtgModel {
    pub a_rd: f64,
    pub b_rd: f64,
    pub c_rd: f64,
    pub d_rd: f64,
    pub lambda_r: f64,
    /// Per-unit base the coefficients are expressed in; `None` for SI models.
    #[cfg_attr(feature = "serde", serde(default))]
    pub base: Option<BaseUnits>,
}

impl ReducedWtgModel {
    pub fn in_base(mut self, base: BaseUnits) -> Self {
        self.base = Some(base);
        self
    }
}

pub fn reduce(p: &ModePartition, lambda_r: f64) -> Result<ReducedWtgModel> {
    let m = p.a22.nrows();
    let shifted = &Matrix::identity(m).scale(lambda_r) - &p.a22;
    let x = shifted.solve(&p.a21).map_err(|_| Error::Singular { context: "λ_r I - A22" })?;
    let neg_a22 = -&p.a22;
    let y = neg_a22.solve(&p.b_z).map_err(|_| Error::Singular { context: "A22" })?;
    Ok(ReducedWtgModel {
        a_rd: p.a11 + (&p.a12 * &x)[(0, 0)],
        b_rd: p.b_r + (&p.a12 * &y)[(0, 0)],
        c_rd: p.c_r + (&p.c_z * &x)[(0, 0)],
        d_rd: p.d + (&p.c_z * &y)[(0, 0)],
        lambda_r,
        base: None,
    })
}

/// Everything produced by one reduction run.
#[derive(Clone, Debug)]
pub struct Reduction {
    pub reduced: ReducedWtgModel,
    pub partition: ModePartition,
    pub mode: RelevantMode,
    pub full_eigenvalues: Vec<Complex64>,
}

pub fn sma_reduce(model: &StateSpaceModel, relevant_index: usize, opts: &SmaOptions) -> Result<Reduction> {
    let mode = select_relevant_mode(&model.a, relevant_index, opts)?;
    let part = partition(model, relevant_index)?;
    let reduced = reduce(&part, mode.lambda)?;
    let full_eigenvalues = Eigen::new(&model.a)?.values;
    Ok(Reduction { reduced, partition: part, mode, full_eigenvalues })
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct TurbineReductionOptions {
    /// Operating wind speed (m/s).
    pub v_wind: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub linearize: LinearizeOptions,
    #[cfg_attr(feature = "serde", serde(default))]
    pub newton: NewtonOptions,
    #[cfg_attr(feature = "serde", serde(default))]
    pub sma: SmaOptions,
}

impl Default for TurbineReductionOptions {
    fn default() -> Self {
        TurbineReductionOptions {
            v_wind: 12.0,
            linearize: LinearizeOptions::default(),
            newton: NewtonOptions::default(),
            sma: SmaOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TurbineReduction {
    pub equilibrium: Equilibrium,
    /// Full linear model in per unit (input `u_ie`, output `ΔP_gen`).
    pub full: StateSpaceModel,
    pub reduction: Reduction,
}

/// Trim at the operating wind speed, linearize, convert to per unit and
/// keep the rotor-speed mode.
pub fn reduce_turbine(params: &PlantParameters, opts: &TurbineReductionOptions) -> Result<TurbineReduction> {
    let guess = default_initial_guess(&params.wtg, opts.v_wind);
    let equilibrium = find_equilibrium(&params.wtg, opts.v_wind, &guess, &opts.newton)?;
    let si = linearize_wtg(&params.wtg, &equilibrium, &opts.linearize)?;
    let full = wtg_to_per_unit(&si, &params.base, params.wtg.turbine.pole_pairs_p);
    let mut reduction = sma_reduce(&full, WTG_OMEGA_INDEX, &opts.sma)?;
    reduction.reduced = reduction.reduced.in_base(params.base);
    Ok(TurbineReduction { equilibrium, full, reduction })
}

/// Unit-step response of a single-input single-output model sampled at
/// `t = k·dt`, `k = 0..=steps`, by exact zero-order-hold discretization.
pub fn step_response(a: &Matrix, b: &Matrix, c: &Matrix, d: f64, dt: f64, steps: usize) -> Result<Vec<f64>> {
    let n = a.nrows();
    let mut m = Matrix::zeros(n + 1, n + 1);
    m.set_submatrix(0, 0, &a.scale(dt));
    m.set_submatrix(0, n, &b.scale(dt));
    let phi = expm(&m)?;
    let mut z = vec![0.0; n + 1];
    z[n] = 1.0;
    let mut out = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        if k > 0 {
            z = phi.mul_vec(&z);
        }
        let y: f64 = (0..n).map(|i| c[(0, i)] * z[i]).sum::<f64>() + d;
        out.push(y);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct StepFidelity {
    /// `max_t |y_full - y_reduced| / max_t |y_full|` over `0 < t <= horizon`.
    pub peak_deviation: f64,
    pub horizon: f64,
}

/// Compares reduced and full step responses from `u_ie` to `ΔP_gen`. The
/// instant `t = 0` is excluded: there the full model's algebraic feedthrough
/// and the reduced model's quasi-static gain differ by construction.
pub fn step_fidelity(model: &StateSpaceModel, reduced: &ReducedWtgModel, horizon: f64, dt: f64) -> Result<StepFidelity> {
    let steps = libm::round(horizon / dt) as usize;
    let full = step_response(&model.a, &model.b, &model.c, model.d[(0, 0)], dt, steps)?;
    let red = step_response(
        &Matrix::from_rows(&[&[reduced.a_rd]]),
        &Matrix::from_rows(&[&[reduced.b_rd]]),
        &Matrix::from_rows(&[&[reduced.c_rd]]),
        reduced.d_rd,
        dt,
        steps,
    )?;
    let peak = full[1..].iter().fold(0.0f64, |m, v| m.max(abs(*v)));
    let dev = full[1..].iter().zip(&red[1..]).fold(0.0f64, |m, (f, r)| m.max(abs(f - r)));
    Ok(StepFidelity { peak_deviation: if peak > 0.0 { dev / peak } else { 0.0 }, horizon })
}
