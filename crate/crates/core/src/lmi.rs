//! Affine symmetric matrix expressions and a phase-I barrier solver.
//!
//! An expression is a list of symmetric constraint matrices `F_b(y)`, each
//! affine in the scalar decision vector `y`. The solver minimises `t` subject
//! to `F_b(y) ⪯ tI` for every `b`; the expression is feasible when some `y`
//! reaches `t ≤ -ε`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{abs, Cholesky, Lu, Matrix, SymmetricEigen};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    /// Parameterised by the upper triangle.
    Symmetric,
    Full,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariableSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub kind: VarKind,
    /// Position of the first scalar of this variable in the decision vector.
    pub offset: usize,
}

impl VariableSpec {
    pub fn scalar_count(&self) -> usize {
        match self.kind {
            VarKind::Symmetric => self.rows * (self.rows + 1) / 2,
            VarKind::Full => self.rows * self.cols,
        }
    }

    /// Matrix position `(i, j)` addressed by local scalar `k`; for symmetric
    /// variables `i <= j` and the scalar also sets `(j, i)`.
    pub fn position(&self, k: usize) -> (usize, usize) {
        match self.kind {
            VarKind::Full => (k / self.cols, k % self.cols),
            VarKind::Symmetric => {
                let n = self.rows;
                let mut i = 0;
                let mut start = 0;
                while k >= start + (n - i) {
                    start += n - i;
                    i += 1;
                }
                (i, i + (k - start))
            }
        }
    }

    fn unpack(&self, y: &[f64]) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for k in 0..self.scalar_count() {
            let (i, j) = self.position(k);
            let v = y[self.offset + k];
            m[(i, j)] = v;
            if self.kind == VarKind::Symmetric {
                m[(j, i)] = v;
            }
        }
        m
    }

    fn pack(&self, m: &Matrix, y: &mut [f64]) {
        for k in 0..self.scalar_count() {
            let (i, j) = self.position(k);
            y[self.offset + k] = m[(i, j)];
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct VarId(pub usize);

/// One scalar's contribution to one constraint: `value` at `(row, col)` and,
/// off the diagonal, at `(col, row)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coefficient {
    pub constraint: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintLayout {
    pub name: String,
    pub block_sizes: Vec<usize>,
    pub block_offsets: Vec<usize>,
    pub dim: usize,
}

impl ConstraintLayout {
    fn locate(&self, index: usize) -> (usize, usize) {
        let mut b = 0;
        while b + 1 < self.block_offsets.len() && self.block_offsets[b + 1] <= index {
            b += 1;
        }
        (b, index - self.block_offsets[b])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearMatrixExpression {
    pub variables: Vec<VariableSpec>,
    pub constraints: Vec<ConstraintLayout>,
    /// Symmetric constant part of each constraint.
    pub constants: Vec<Matrix>,
    /// Upper-triangle coefficients, indexed by global scalar.
    pub coefficients: Vec<Vec<Coefficient>>,
}

/// Named matrix values for every decision variable.
pub type Assignment = BTreeMap<String, Matrix>;

/// One line of the plain-text sparse dump.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseEntry {
    /// `name[i,j]` of the scalar, or `const`.
    pub variable: String,
    pub constraint: String,
    pub block_row: usize,
    pub block_col: usize,
    pub local_row: usize,
    pub local_col: usize,
    pub value: f64,
}

impl LinearMatrixExpression {
    pub fn n_scalars(&self) -> usize {
        self.coefficients.len()
    }

    pub fn variable(&self, name: &str) -> Option<&VariableSpec> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn evaluate(&self, y: &[f64]) -> Vec<Matrix> {
        let mut out = self.constants.clone();
        for (k, coeffs) in self.coefficients.iter().enumerate() {
            let yk = y[k];
            if yk == 0.0 {
                continue;
            }
            for c in coeffs {
                let m = &mut out[c.constraint];
                m[(c.row, c.col)] += yk * c.value;
                if c.row != c.col {
                    m[(c.col, c.row)] += yk * c.value;
                }
            }
        }
        out
    }

    pub fn to_assignment(&self, y: &[f64]) -> Assignment {
        self.variables.iter().map(|v| (v.name.clone(), v.unpack(y))).collect()
    }

    pub fn from_assignment(&self, assignment: &Assignment) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.n_scalars()];
        for v in &self.variables {
            let m = assignment.get(&v.name).ok_or_else(|| Error::MissingVariable(v.name.clone()))?;
            if m.shape() != (v.rows, v.cols) {
                return Err(Error::DimensionMismatch {
                    context: "assignment variable shape",
                    expected: v.rows * v.cols,
                    found: m.nrows() * m.ncols(),
                });
            }
            v.pack(m, &mut y);
        }
        Ok(y)
    }

    pub fn sparse_entries(&self) -> Vec<SparseEntry> {
        let mut out = Vec::new();
        for (b, c) in self.constants.iter().enumerate() {
            let lay = &self.constraints[b];
            for i in 0..lay.dim {
                for j in i..lay.dim {
                    if c[(i, j)] != 0.0 {
                        out.push(self.entry("const".to_string(), b, i, j, c[(i, j)]));
                    }
                }
            }
        }
        for v in &self.variables {
            for k in 0..v.scalar_count() {
                let (i, j) = v.position(k);
                for c in &self.coefficients[v.offset + k] {
                    let label = format!("{}[{},{}]", v.name, i, j);
                    out.push(self.entry(label, c.constraint, c.row, c.col, c.value));
                }
            }
        }
        out
    }

    fn entry(&self, variable: String, b: usize, row: usize, col: usize, value: f64) -> SparseEntry {
        let lay = &self.constraints[b];
        let (block_row, local_row) = lay.locate(row);
        let (block_col, local_col) = lay.locate(col);
        SparseEntry {
            variable,
            constraint: lay.name.clone(),
            block_row,
            block_col,
            local_row,
            local_col,
            value,
        }
    }
}

/// Incremental construction of a [`LinearMatrixExpression`] from block terms
/// of the form `s · L X R` or `s · L Xᵀ R`.
#[derive(Debug, Default)]
pub struct LmiBuilder {
    variables: Vec<VariableSpec>,
    layouts: Vec<ConstraintLayout>,
    constants: Vec<Matrix>,
    acc: BTreeMap<(usize, usize, usize, usize), f64>,
    n_scalars: usize,
}

impl LmiBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push_var(&mut self, name: &str, rows: usize, cols: usize, kind: VarKind) -> VarId {
        let spec = VariableSpec { name: name.to_string(), rows, cols, kind, offset: self.n_scalars };
        self.n_scalars += spec.scalar_count();
        self.variables.push(spec);
        VarId(self.variables.len() - 1)
    }

    pub fn symmetric(&mut self, name: &str, n: usize) -> VarId {
        self.push_var(name, n, n, VarKind::Symmetric)
    }

    pub fn full(&mut self, name: &str, rows: usize, cols: usize) -> VarId {
        self.push_var(name, rows, cols, VarKind::Full)
    }

    pub fn constraint(&mut self, name: &str, block_sizes: &[usize]) -> usize {
        let mut offsets = Vec::with_capacity(block_sizes.len());
        let mut dim = 0;
        for s in block_sizes {
            offsets.push(dim);
            dim += s;
        }
        self.layouts.push(ConstraintLayout {
            name: name.to_string(),
            block_sizes: block_sizes.to_vec(),
            block_offsets: offsets,
            dim,
        });
        self.constants.push(Matrix::zeros(dim, dim));
        self.layouts.len() - 1
    }

    fn place<F: FnMut(usize, usize, f64)>(
        &self,
        con: usize,
        bi: usize,
        bj: usize,
        block: &Matrix,
        mut put: F,
    ) {
        let lay = &self.layouts[con];
        assert_eq!(block.nrows(), lay.block_sizes[bi], "block row size");
        assert_eq!(block.ncols(), lay.block_sizes[bj], "block column size");
        let (r0, c0) = (lay.block_offsets[bi], lay.block_offsets[bj]);
        for i in 0..block.nrows() {
            for j in 0..block.ncols() {
                let v = block[(i, j)];
                if v == 0.0 {
                    continue;
                }
                put(r0 + i, c0 + j, v);
                if bi != bj {
                    put(c0 + j, r0 + i, v);
                }
            }
        }
    }

    /// Adds a constant block at `(bi, bj)`; off-diagonal blocks are mirrored.
    pub fn add_constant(&mut self, con: usize, bi: usize, bj: usize, block: &Matrix) {
        let mut updates = Vec::new();
        self.place(con, bi, bj, block, |r, c, v| updates.push((r, c, v)));
        for (r, c, v) in updates {
            self.constants[con][(r, c)] += v;
        }
    }

    /// Adds `scale · L X R` (or `L Xᵀ R`) at block `(bi, bj)`; off-diagonal
    /// blocks are mirrored, diagonal blocks are symmetrised at build time.
    #[allow(clippy::too_many_arguments)]
    pub fn add_term(
        &mut self,
        con: usize,
        bi: usize,
        bj: usize,
        left: &Matrix,
        var: VarId,
        transpose: bool,
        right: &Matrix,
        scale: f64,
    ) {
        let spec = self.variables[var.0].clone();
        let (xr, xc) = if transpose { (spec.cols, spec.rows) } else { (spec.rows, spec.cols) };
        assert_eq!(left.ncols(), xr, "left factor width");
        assert_eq!(right.nrows(), xc, "right factor height");
        for k in 0..spec.scalar_count() {
            let (i, j) = spec.position(k);
            // Unit direction E = e_i e_jᵀ (+ e_j e_iᵀ when symmetric off-diagonal).
            let mut units = vec![(i, j)];
            if spec.kind == VarKind::Symmetric && i != j {
                units.push((j, i));
            }
            let mut block = Matrix::zeros(left.nrows(), right.ncols());
            for (a, b) in units {
                let (a, b) = if transpose { (b, a) } else { (a, b) };
                for r in 0..left.nrows() {
                    let l = left[(r, a)];
                    if l == 0.0 {
                        continue;
                    }
                    for c in 0..right.ncols() {
                        block[(r, c)] += scale * l * right[(b, c)];
                    }
                }
            }
            let mut updates = Vec::new();
            self.place(con, bi, bj, &block, |r, c, v| updates.push((r, c, v)));
            for (r, c, v) in updates {
                *self.acc.entry((spec.offset + k, con, r, c)).or_insert(0.0) += v;
            }
        }
    }

    pub fn build(self) -> LinearMatrixExpression {
        let mut coefficients: Vec<Vec<Coefficient>> = vec![Vec::new(); self.n_scalars];
        for (&(k, con, r, c), &v) in &self.acc {
            if r > c {
                continue;
            }
            let mirror = if r == c { v } else { self.acc.get(&(k, con, c, r)).copied().unwrap_or(0.0) };
            let value = if r == c { v } else { 0.5 * (v + mirror) };
            if value != 0.0 {
                coefficients[k].push(Coefficient { constraint: con, row: r, col: c, value });
            }
        }
        for (k, con, r, c) in self.acc.keys().copied() {
            if r > c && !self.acc.contains_key(&(k, con, c, r)) {
                let v = self.acc[&(k, con, r, c)];
                coefficients[k].push(Coefficient { constraint: con, row: c, col: r, value: 0.5 * v });
            }
        }
        let constants = self.constants.iter().map(|m| m.symmetrize()).collect();
        LinearMatrixExpression {
            variables: self.variables,
            constraints: self.layouts,
            constants,
            coefficients,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct SolverOptions {
    /// Cap on the total number of Newton steps.
    pub max_iterations: usize,
    /// Centering stops once half the squared Newton decrement falls below this.
    pub newton_tol: f64,
    /// Strict-feasibility margin, relative to `max(1, max |F(0)|)`.
    pub feasibility_margin: f64,
    pub initial_barrier: f64,
    pub barrier_growth: f64,
    /// Radius of the ball `‖y‖ < R` that keeps the barrier bounded below.
    pub radius: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 2000,
            newton_tol: 1e-8,
            feasibility_margin: 1e-7,
            initial_barrier: 1.0,
            barrier_growth: 10.0,
            radius: 1e6,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let bad = |field: &str| Error::InvalidParameter {
            field: format!("{prefix}.{field}"),
            reason: "must be finite and > 0",
        };
        if self.max_iterations == 0 {
            return Err(bad("max_iterations"));
        }
        for (v, f) in [
            (self.newton_tol, "newton_tol"),
            (self.feasibility_margin, "feasibility_margin"),
            (self.initial_barrier, "initial_barrier"),
            (self.radius, "radius"),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(bad(f));
            }
        }
        if !(self.barrier_growth.is_finite() && self.barrier_growth > 1.0) {
            return Err(Error::InvalidParameter {
                field: format!("{prefix}.barrier_growth"),
                reason: "must be > 1",
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum SolveStatus {
    Feasible,
    Infeasible,
    NumericalFailure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdpSolution {
    pub status: SolveStatus,
    /// Flat decision vector.
    pub y: Vec<f64>,
    /// Largest eigenvalue over all constraints, recomputed independently.
    pub max_eigenvalue: f64,
    /// Absolute margin the certificate had to beat.
    pub epsilon: f64,
    /// Certified lower bound on the optimal `t` (meaningful when infeasible).
    pub lower_bound: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarginReport {
    pub max_eigenvalue: f64,
    /// Largest eigenvalue of each constraint, by constraint name.
    pub per_constraint: Vec<(String, f64)>,
    pub epsilon: f64,
    pub passes: bool,
}

/// Absolute margin `ε · max(1, max |F(0)|)`.
pub fn absolute_margin(expr: &LinearMatrixExpression, relative: f64) -> f64 {
    let scale = expr.constants.iter().fold(1.0f64, |m, c| m.max(c.max_abs()));
    relative * scale
}

pub fn max_eigenvalues(blocks: &[Matrix]) -> Result<Vec<f64>> {
    blocks
        .iter()
        .map(|b| Ok(SymmetricEigen::new(b)?.values.last().copied().unwrap_or(f64::NEG_INFINITY)))
        .collect()
}

/// Re-evaluates an assignment; the verdict is `max eig ≤ -ε`.
pub fn check_solution(expr: &LinearMatrixExpression, assignment: &Assignment, epsilon: f64) -> Result<MarginReport> {
    let y = expr.from_assignment(assignment)?;
    check_vector(expr, &y, epsilon)
}

pub fn check_vector(expr: &LinearMatrixExpression, y: &[f64], epsilon: f64) -> Result<MarginReport> {
    let eig = max_eigenvalues(&expr.evaluate(y))?;
    let max_eigenvalue = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(MarginReport {
        max_eigenvalue,
        per_constraint: expr.constraints.iter().map(|c| c.name.clone()).zip(eig).collect(),
        epsilon,
        passes: max_eigenvalue <= -epsilon,
    })
}

struct VarBlock {
    constraint: usize,
    /// Expanded symmetric entries grouped by row: `(row, [(col, value)])`.
    rows: Vec<(usize, Vec<(usize, f64)>)>,
    /// Upper entries with off-diagonal weight doubled, for trace products.
    upper: Vec<(usize, usize, f64)>,
}

struct Prepared {
    per_var: Vec<Vec<VarBlock>>,
    dims: Vec<usize>,
}

fn prepare(expr: &LinearMatrixExpression) -> Prepared {
    let nb = expr.constraints.len();
    let per_var = expr
        .coefficients
        .iter()
        .map(|coeffs| {
            let mut blocks = Vec::new();
            for b in 0..nb {
                let mut rows: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
                let mut upper = Vec::new();
                for c in coeffs.iter().filter(|c| c.constraint == b) {
                    rows.entry(c.row).or_default().push((c.col, c.value));
                    if c.row != c.col {
                        rows.entry(c.col).or_default().push((c.row, c.value));
                        upper.push((c.row, c.col, 2.0 * c.value));
                    } else {
                        upper.push((c.row, c.col, c.value));
                    }
                }
                if !upper.is_empty() {
                    blocks.push(VarBlock { constraint: b, rows: rows.into_iter().collect(), upper });
                }
            }
            blocks
        })
        .collect();
    Prepared { per_var, dims: expr.constraints.iter().map(|c| c.dim).collect() }
}

fn shifted(f: &[Matrix], t: f64) -> Vec<Matrix> {
    f.iter()
        .map(|m| {
            let mut s = -m;
            for i in 0..s.nrows() {
                s[(i, i)] += t;
            }
            s
        })
        .collect()
}

fn barrier_value(expr: &LinearMatrixExpression, y: &[f64], t: f64, s: f64, radius: f64) -> f64 {
    let r2 = radius * radius - y.iter().map(|v| v * v).sum::<f64>();
    if !(r2 > 0.0) {
        return f64::INFINITY;
    }
    let mut val = s * t - libm::log(r2);
    for m in shifted(&expr.evaluate(y), t) {
        match Cholesky::new(&m) {
            Some(ch) => val -= ch.log_det(),
            None => return f64::INFINITY,
        }
    }
    val
}

/// Phase-I solve. With `stop_when_feasible` the iteration returns as soon as
/// `t ≤ -ε`; otherwise `t` is minimised to the configured accuracy.
pub fn solve_phase_one(
    expr: &LinearMatrixExpression,
    opts: &SolverOptions,
    stop_when_feasible: bool,
) -> SdpSolution {
    let eps = absolute_margin(expr, opts.feasibility_margin);
    let prep = prepare(expr);
    let m = expr.n_scalars();
    let n_total: f64 = prep.dims.iter().sum::<usize>() as f64;
    let mut y = vec![0.0; m];
    let f0 = expr.evaluate(&y);
    let mut t = match max_eigenvalues(&f0) {
        Ok(e) => e.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0,
        Err(_) => return failure(y, eps, 0),
    };
    let mut s = opts.initial_barrier;
    let mut iterations = 0;
    let mut lower_bound = f64::NEG_INFINITY;

    let finish = |y: Vec<f64>, status: SolveStatus, lower_bound: f64, iterations: usize| {
        let max_eigenvalue = max_eigenvalues(&expr.evaluate(&y))
            .map(|e| e.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .unwrap_or(f64::NAN);
        let status = match status {
            SolveStatus::Feasible if !(max_eigenvalue <= -eps) => SolveStatus::NumericalFailure,
            other => other,
        };
        SdpSolution { status, y, max_eigenvalue, epsilon: eps, lower_bound, iterations }
    };

    loop {
        // Centering for the current barrier weight.
        loop {
            if iterations >= opts.max_iterations {
                let status = if t <= -eps {
                    SolveStatus::Feasible
                } else if t > -0.5 * eps {
                    SolveStatus::Infeasible
                } else {
                    SolveStatus::NumericalFailure
                };
                return finish(y, status, lower_bound, iterations);
            }
            iterations += 1;
            let f = expr.evaluate(&y);
            let sm = shifted(&f, t);
            let mut sinv = Vec::with_capacity(sm.len());
            for b in &sm {
                match Cholesky::new(b) {
                    Some(ch) => sinv.push(ch.inverse()),
                    None => return finish(y, SolveStatus::NumericalFailure, lower_bound, iterations),
                }
            }
            let (g, h) = gradient_hessian(&prep, &sinv, &y, s, opts.radius);
            let dz = match newton_direction(&h, &g) {
                Some(d) => d,
                None => return finish(y, SolveStatus::NumericalFailure, lower_bound, iterations),
            };
            let lam2: f64 = -g.iter().zip(&dz).map(|(a, b)| a * b).sum::<f64>();
            let phi0 = barrier_value(expr, &y, t, s, opts.radius);
            let mut alpha = 1.0;
            let mut moved = false;
            while alpha > 1e-12 {
                let yt: Vec<f64> = y.iter().zip(&dz).map(|(a, d)| a + alpha * d).collect();
                let tt = t + alpha * dz[m];
                if barrier_value(expr, &yt, tt, s, opts.radius) <= phi0 - 0.25 * alpha * lam2 {
                    y = yt;
                    t = tt;
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if stop_when_feasible && t < -eps {
                return finish(y, SolveStatus::Feasible, lower_bound, iterations);
            }
            if !moved || 0.5 * lam2 < opts.newton_tol {
                break;
            }
        }
        lower_bound = lower_bound.max(t - (n_total + 1.0) / s);
        if lower_bound > -eps {
            return finish(y, SolveStatus::Infeasible, lower_bound, iterations);
        }
        if n_total / s < 1e-9 * t.abs().max(1.0) || s > 1e12 {
            let status = if t <= -eps { SolveStatus::Feasible } else { SolveStatus::Infeasible };
            return finish(y, status, lower_bound, iterations);
        }
        s *= opts.barrier_growth;
    }
}

fn failure(y: Vec<f64>, eps: f64, iterations: usize) -> SdpSolution {
    SdpSolution {
        status: SolveStatus::NumericalFailure,
        y,
        max_eigenvalue: f64::NAN,
        epsilon: eps,
        lower_bound: f64::NEG_INFINITY,
        iterations,
    }
}

/// Stops at the first strictly feasible point.
pub fn solve_feasibility(expr: &LinearMatrixExpression, opts: &SolverOptions) -> SdpSolution {
    solve_phase_one(expr, opts, true)
}

/// Drives the largest eigenvalue as low as the barrier schedule allows.
pub fn minimize_max_eigenvalue(expr: &LinearMatrixExpression, opts: &SolverOptions) -> SdpSolution {
    solve_phase_one(expr, opts, false)
}

fn gradient_hessian(prep: &Prepared, sinv: &[Matrix], y: &[f64], s: f64, radius: f64) -> (Vec<f64>, Matrix) {
    let m = prep.per_var.len();
    let mut g = vec![0.0; m + 1];
    let mut h = Matrix::zeros(m + 1, m + 1);

    // Var-block incidence lists so H_kl only visits variables sharing a block.
    let nb = prep.dims.len();
    let mut by_block: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nb];
    for (k, blocks) in prep.per_var.iter().enumerate() {
        for (idx, vb) in blocks.iter().enumerate() {
            by_block[vb.constraint].push((k, idx));
        }
    }

    for (b, vars) in by_block.iter().enumerate() {
        let si = &sinv[b];
        let d = prep.dims[b];
        let mut gmat = Matrix::zeros(d, d);
        let mut wrow = vec![0.0; d];
        for (pos, &(k, idx)) in vars.iter().enumerate() {
            let vb = &prep.per_var[k][idx];
            // g_k += tr(S⁻¹ F_k)
            g[k] += vb.upper.iter().map(|&(r, c, w)| w * si[(r, c)]).sum::<f64>();
            // G = S⁻¹ F_k S⁻¹ = Σ_r S⁻¹[:, r] (F_k S⁻¹)[r, :]
            for v in gmat.as_mut_slice() {
                *v = 0.0;
            }
            for (r, entries) in &vb.rows {
                for x in wrow.iter_mut() {
                    *x = 0.0;
                }
                for &(c, v) in entries {
                    for (x, sv) in wrow.iter_mut().zip(si.row_slice(c)) {
                        *x += v * sv;
                    }
                }
                for i in 0..d {
                    let a = si[(i, *r)];
                    if a == 0.0 {
                        continue;
                    }
                    let row = &mut gmat.as_mut_slice()[i * d..(i + 1) * d];
                    for (x, w) in row.iter_mut().zip(&wrow) {
                        *x += a * w;
                    }
                }
            }
            h[(k, m)] -= gmat.trace();
            for &(l, lidx) in &vars[pos..] {
                let lb = &prep.per_var[l][lidx];
                let v: f64 = lb.upper.iter().map(|&(r, c, w)| w * gmat[(r, c)]).sum();
                h[(k, l)] += v;
                if l != k {
                    h[(l, k)] += v;
                }
            }
        }
        g[m] -= si.trace();
        h[(m, m)] += si.as_slice().iter().map(|v| v * v).sum::<f64>();
    }
    g[m] += s;
    for k in 0..m {
        h[(m, k)] = h[(k, m)];
    }
    let r2 = radius * radius - y.iter().map(|v| v * v).sum::<f64>();
    for k in 0..m {
        g[k] += 2.0 * y[k] / r2;
        h[(k, k)] += 2.0 / r2;
        if y[k] != 0.0 {
            for l in 0..m {
                h[(k, l)] += 4.0 * y[k] * y[l] / (r2 * r2);
            }
        }
    }
    (g, h)
}

fn newton_direction(h: &Matrix, g: &[f64]) -> Option<Vec<f64>> {
    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
    if let Some(ch) = Cholesky::new(h) {
        let d = ch.solve_vec(&neg);
        if d.iter().all(|v| v.is_finite()) {
            return Some(d);
        }
    }
    let scale = (0..h.nrows()).fold(0.0f64, |m, i| m.max(abs(h[(i, i)])));
    let mut reg = h.clone();
    for i in 0..reg.nrows() {
        reg[(i, i)] += 1e-12 * scale.max(1.0);
    }
    let d = Lu::new(&reg).ok()?.solve_vec(&neg);
    d.iter().all(|v| v.is_finite()).then_some(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `Aᵀ P + P A ≺ 0`, `P ≻ εI`.
    fn lyapunov(a: &Matrix) -> LinearMatrixExpression {
        let n = a.nrows();
        let mut bld = LmiBuilder::new();
        let p = bld.symmetric("P", n);
        let main = bld.constraint("lyapunov", &[n]);
        let id = Matrix::identity(n);
        bld.add_term(main, 0, 0, &a.transpose(), p, false, &id, 1.0);
        bld.add_term(main, 0, 0, &id, p, false, a, 1.0);
        let side = bld.constraint("p_positive", &[n]);
        bld.add_term(side, 0, 0, &id, p, false, &id, -1.0);
        bld.add_constant(side, 0, 0, &id.scale(1e-7));
        bld.build()
    }

    #[test]
    fn symmetric_positions_cover_upper_triangle() {
        let v = VariableSpec { name: "X".into(), rows: 4, cols: 4, kind: VarKind::Symmetric, offset: 0 };
        let pos: Vec<_> = (0..v.scalar_count()).map(|k| v.position(k)).collect();
        assert_eq!(pos.len(), 10);
        assert_eq!(pos[0], (0, 0));
        assert_eq!(pos[3], (0, 3));
        assert_eq!(pos[4], (1, 1));
        assert_eq!(pos[9], (3, 3));
    }

    #[test]
    fn stable_lyapunov_is_feasible() {
        let expr = lyapunov(&Matrix::diagonal(&[-1.0, -2.0]));
        let sol = solve_feasibility(&expr, &SolverOptions::default());
        assert_eq!(sol.status, SolveStatus::Feasible);
        assert!(sol.max_eigenvalue <= -sol.epsilon);
    }

    #[test]
    fn unstable_lyapunov_is_infeasible() {
        let expr = lyapunov(&Matrix::diagonal(&[1.0, -2.0]));
        let sol = solve_feasibility(&expr, &SolverOptions::default());
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn zero_assignment_margin_is_constant_eigenvalue() {
        let mut bld = LmiBuilder::new();
        let x = bld.symmetric("X", 2);
        let c = bld.constraint("c", &[2]);
        bld.add_constant(c, 0, 0, &Matrix::diagonal(&[-3.0, -0.5]));
        bld.add_term(c, 0, 0, &Matrix::identity(2), x, false, &Matrix::identity(2), 1.0);
        let expr = bld.build();
        let mut asg = Assignment::new();
        asg.insert("X".into(), Matrix::zeros(2, 2));
        let rep = check_solution(&expr, &asg, 1e-7).unwrap();
        assert!((rep.max_eigenvalue + 0.5).abs() < 1e-14);
        asg.clear();
        assert_eq!(check_solution(&expr, &asg, 1e-7), Err(Error::MissingVariable("X".into())));
    }

    #[test]
    fn off_diagonal_blocks_are_mirrored() {
        let mut bld = LmiBuilder::new();
        let k = bld.full("K", 1, 2);
        let c = bld.constraint("c", &[2, 1]);
        bld.add_term(c, 0, 1, &Matrix::identity(2), k, true, &Matrix::identity(1), 1.0);
        let expr = bld.build();
        let f = expr.evaluate(&[2.0, 3.0]);
        assert_eq!(f[0][(0, 2)], 2.0);
        assert_eq!(f[0][(2, 0)], 2.0);
        assert_eq!(f[0][(1, 2)], 3.0);
        assert!(f[0].is_symmetric());
    }
}
