//! The inner variational problem: given an adjoint trajectory `P`, find the
//! control profile `u ∈ [H¹₀(0,T)]ᵖ` and multiplier `λ` with
//!
//! ```text
//! α(u,v) + β(u̇,v̇) + γ(λ,v̇) = −(ᵗB P, v)   for all v,
//! |λ_e| ≤ 1,   (λ, u̇) = |u̇|   a.e.
//! ```
//!
//! Discretized with piecewise-linear elements on the time grid: `u` is nodal
//! with pinned zero ends, `λ` is constant per element. The smooth part
//! `α·mass + β·stiffness` is a fixed SPD tridiagonal operator, factorized
//! once. The load pairing uses the integrator-consistent midpoint quadrature
//! so the outer duality identities close exactly.
//!
//! Two solvers:
//! * [`uzawa_solve`] — projected dual ascent `λ ← Π(λ + ρ u̇)` alternating
//!   with linear solves, plus a periodic active-set polish that merges
//!   zero-slope runs, re-solves exactly, and recovers interior multipliers
//!   from the nodal stationarity chain. A verified polish is the exact
//!   discrete solution: plateaus are bit-flat and complementarity is exact.
//! * [`regularized_solve`] — lagged-diffusivity fixed point for the smoothed
//!   problem with per-element weight `γ/√(η + |u̇|²)`; an independent oracle
//!   for the duality path.

use nalgebra::DMatrix;

use crate::dynamics::TimeGrid;
use crate::error::{Error, Result};
use crate::integrator::Trajectory;

/// Multiplier values with `|λ_e| ≤ 1` are accepted up to this slack.
const FEASIBILITY_SLACK: f64 = 1e-12;
/// `|λ_e| ≥ 1 − ACTIVE_TOL` classifies an element as active during polish.
const ACTIVE_TOL: f64 = 1e-6;
/// Recovered polish multipliers may exceed the unit ball by at most this.
const POLISH_FEAS_TOL: f64 = 1e-9;
/// Fixed-point iteration cap for the regularized solver.
const REGULARIZED_MAX_ITER: usize = 500_000;

/// Cost weights `α ≥ 0`, `β > 0`, `γ ≥ 0`, `ε > 0`.
///
/// `γ` multiplies the total-variation pairing of the variational inequality;
/// reported control costs weight the total variation by `2γ`. `ε` is the
/// asymptotic penalty scale of the ε-optimal variant and is carried for that
/// use only; the exact-control pipeline is its ε → 0 limit and never reads it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    alpha: f64,
    beta: f64,
    gamma: f64,
    epsilon: f64,
}

impl CostWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be ≥ 0, got {alpha}")));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be > 0, got {beta}")));
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::InvalidParameter(format!("gamma must be ≥ 0, got {gamma}")));
        }
        Ok(Self {
            alpha,
            beta,
            gamma,
            epsilon: 1.0,
        })
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {epsilon}")));
        }
        self.epsilon = epsilon;
        Ok(self)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Same weights with a different `γ` (used by γ sweeps and the γ = 0
    /// preconditioner path).
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        let mut w = Self::new(self.alpha, self.beta, gamma)?;
        w.epsilon = self.epsilon;
        Ok(w)
    }
}

/// Piecewise-linear control on the grid, one column per node, zero ends.
#[derive(Debug, Clone)]
pub struct ControlSignal {
    grid: TimeGrid,
    values: DMatrix<f64>,
}

impl ControlSignal {
    /// Validates the shape, finiteness and exactly-zero end columns.
    pub fn new(grid: TimeGrid, values: DMatrix<f64>) -> Result<Self> {
        if values.ncols() != grid.steps() + 1 || values.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "control is {}x{}, expected p x {}",
                values.nrows(),
                values.ncols(),
                grid.steps() + 1
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("control has non-finite entries".into()));
        }
        let last = values.ncols() - 1;
        if values.column(0).amax() != 0.0 || values.column(last).amax() != 0.0 {
            return Err(Error::InvalidParameter(
                "control must vanish exactly at t = 0 and t = T".into(),
            ));
        }
        Ok(Self { grid, values })
    }

    pub fn zero(grid: TimeGrid, p: usize) -> Self {
        let values = DMatrix::zeros(p, grid.steps() + 1);
        Self { grid, values }
    }

    /// Builds the signal from interior nodal values (`p × (K−1)`), padding
    /// the zero end columns.
    pub fn from_interior(grid: TimeGrid, interior: &DMatrix<f64>) -> Self {
        let p = interior.nrows();
        let steps = grid.steps();
        let mut values = DMatrix::zeros(p, steps + 1);
        values
            .view_mut((0, 1), (p, steps - 1))
            .copy_from(interior);
        Self { grid, values }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn interior(&self) -> DMatrix<f64> {
        self.values
            .view((0, 1), (self.p(), self.grid.steps() - 1))
            .into_owned()
    }

    /// Element slopes `(u_{e+1} − u_e)/dt`, one column per element.
    pub fn slopes(&self) -> DMatrix<f64> {
        let steps = self.grid.steps();
        let dt = self.grid.dt();
        DMatrix::from_fn(self.p(), steps, |r, e| {
            (self.values[(r, e + 1)] - self.values[(r, e)]) / dt
        })
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.amax()
    }

    /// `∫|u|²` with element-exact quadrature of the linear interpolant.
    pub fn l2_norm_sq(&self) -> f64 {
        let dt = self.grid.dt();
        let mut acc = 0.0;
        for e in 0..self.grid.steps() {
            let a = self.values.column(e);
            let b = self.values.column(e + 1);
            acc += (a.dot(&a) + a.dot(&b) + b.dot(&b)) / 3.0;
        }
        acc * dt
    }

    /// `∫|u̇|²` (slopes are constant per element).
    pub fn slope_l2_norm_sq(&self) -> f64 {
        let dt = self.grid.dt();
        let s = self.slopes();
        let mut acc = 0.0;
        for e in 0..s.ncols() {
            let c = s.column(e);
            acc += c.dot(&c);
        }
        acc * dt
    }

    /// Discrete `H¹` norm: `√(∫|u|² + ∫|u̇|²)`.
    pub fn h1_norm(&self) -> f64 {
        (self.l2_norm_sq() + self.slope_l2_norm_sq()).sqrt()
    }
}

/// Total variation `Σ_e dt·|(du/dt)_e| = Σ_e |u_{e+1} − u_e|`
/// (per-element Euclidean norm for vector controls).
pub fn tv_seminorm(u: &ControlSignal) -> f64 {
    let mut acc = 0.0;
    for e in 0..u.grid().steps() {
        acc += (u.values().column(e + 1) - u.values().column(e)).norm();
    }
    acc
}

/// Control cost `α∫|u|² + β∫|u̇|² + 2γ·TV(u)` — the quantity the exact
/// control minimizes among all exact controls.
pub fn control_cost(u: &ControlSignal, weights: &CostWeights) -> f64 {
    weights.alpha() * u.l2_norm_sq()
        + weights.beta() * u.slope_l2_norm_sq()
        + 2.0 * weights.gamma() * tv_seminorm(u)
}

/// Per-element multiplier field, `|λ_e| ≤ 1`, one column per element.
#[derive(Debug, Clone)]
pub struct MultiplierField {
    grid: TimeGrid,
    values: DMatrix<f64>,
}

impl MultiplierField {
    pub fn new(grid: TimeGrid, values: DMatrix<f64>) -> Result<Self> {
        if values.ncols() != grid.steps() || values.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "multiplier is {}x{}, expected p x {}",
                values.nrows(),
                values.ncols(),
                grid.steps()
            )));
        }
        for e in 0..values.ncols() {
            let norm = values.column(e).norm();
            if !(norm <= 1.0 + FEASIBILITY_SLACK) {
                return Err(Error::InvalidParameter(format!(
                    "multiplier leaves the unit ball on element {e}: |λ| = {norm}"
                )));
            }
        }
        Ok(Self { grid, values })
    }

    pub fn zero(grid: TimeGrid, p: usize) -> Self {
        let values = DMatrix::zeros(p, grid.steps());
        Self { grid, values }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Largest violation of `|λ_e| ≤ 1` (0 for a feasible field).
    pub fn feasibility_excess(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for e in 0..self.values.ncols() {
            worst = worst.max(self.values.column(e).norm() - 1.0);
        }
        worst.max(0.0)
    }
}

/// The SPD operator `α·mass + β·stiffness` on interior nodes, assembled and
/// LDLᵀ-factorized once per (grid, weights) pair. Tridiagonal with constant
/// bands; the same scalar operator acts on every control component.
#[derive(Debug, Clone)]
pub struct H1Operator {
    grid: TimeGrid,
    p: usize,
    weights: CostWeights,
    diag: f64,
    off: f64,
    // LDLᵀ factors of the interior tridiagonal.
    fact_d: Vec<f64>,
    fact_l: Vec<f64>,
}

/// Assembles and factorizes the smooth inner operator.
pub fn assemble_h1_operators(grid: &TimeGrid, p: usize, weights: &CostWeights) -> Result<H1Operator> {
    H1Operator::assemble(grid, p, weights)
}

impl H1Operator {
    pub fn assemble(grid: &TimeGrid, p: usize, weights: &CostWeights) -> Result<Self> {
        if p == 0 {
            return Err(Error::DimensionMismatch("p must be at least 1".into()));
        }
        let dt = grid.dt();
        let m = grid.steps() - 1;
        if m == 0 {
            return Err(Error::InvalidParameter(
                "grid has no interior nodes (need K ≥ 2)".into(),
            ));
        }
        let diag = weights.alpha() * (2.0 * dt / 3.0) + weights.beta() * (2.0 / dt);
        let off = weights.alpha() * (dt / 6.0) - weights.beta() / dt;
        let (fact_d, fact_l) = ldlt_constant_tridiag(diag, off, m);
        Ok(Self {
            grid: grid.clone(),
            p,
            weights: *weights,
            diag,
            off,
            fact_d,
            fact_l,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn weights(&self) -> &CostWeights {
        &self.weights
    }

    /// Interior matrix bands (diagonal, off-diagonal).
    pub fn bands(&self) -> (f64, f64) {
        (self.diag, self.off)
    }

    /// Solves `A x = rhs` componentwise (rhs is `p × (K−1)`).
    fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.grid.steps() - 1;
        let mut out = rhs.clone();
        let mut scratch = vec![0.0; m];
        for c in 0..rhs.nrows() {
            for k in 0..m {
                scratch[k] = out[(c, k)];
            }
            ldlt_solve(&self.fact_d, &self.fact_l, &mut scratch);
            for k in 0..m {
                out[(c, k)] = scratch[k];
            }
        }
        out
    }

    /// Applies the interior tridiagonal `A` to interior values.
    pub fn apply(&self, interior: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.grid.steps() - 1;
        let p = interior.nrows();
        let mut out = DMatrix::zeros(p, m);
        for c in 0..p {
            for k in 0..m {
                let mut acc = self.diag * interior[(c, k)];
                if k > 0 {
                    acc += self.off * interior[(c, k - 1)];
                }
                if k + 1 < m {
                    acc += self.off * interior[(c, k + 1)];
                }
                out[(c, k)] = acc;
            }
        }
        out
    }
}

/// LDLᵀ factorization of a constant-band SPD tridiagonal.
fn ldlt_constant_tridiag(diag: f64, off: f64, m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut d = vec![0.0; m];
    let mut l = vec![0.0; m.saturating_sub(1)];
    d[0] = diag;
    for k in 1..m {
        l[k - 1] = off / d[k - 1];
        d[k] = diag - off * l[k - 1];
    }
    (d, l)
}

fn ldlt_solve(d: &[f64], l: &[f64], rhs: &mut [f64]) {
    let m = d.len();
    for k in 1..m {
        rhs[k] -= l[k - 1] * rhs[k - 1];
    }
    for k in 0..m {
        rhs[k] /= d[k];
    }
    for k in (0..m - 1).rev() {
        rhs[k] -= l[k] * rhs[k + 1];
    }
}

/// Variable-band SPD tridiagonal used by the regularized solver and the
/// polish step (bands change per iteration / per merge pattern).
struct Tridiag {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl Tridiag {
    fn factor(diag: &[f64], off: &[f64]) -> Self {
        let m = diag.len();
        let mut d = vec![0.0; m];
        let mut l = vec![0.0; m.saturating_sub(1)];
        if m > 0 {
            d[0] = diag[0];
            for k in 1..m {
                l[k - 1] = off[k - 1] / d[k - 1];
                d[k] = diag[k] - off[k - 1] * l[k - 1];
            }
        }
        Self { d, l }
    }

    fn solve(&self, rhs: &mut [f64]) {
        ldlt_solve(&self.d, &self.l, rhs);
    }
}

/// Extracts the control-space profile `g = ᵗB P` (one column per node).
pub fn control_profile(adj: &Trajectory, control_map: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if control_map.nrows() != adj.n() {
        return Err(Error::DimensionMismatch(format!(
            "control map has {} rows, trajectory has {} dofs",
            control_map.nrows(),
            adj.n()
        )));
    }
    Ok(control_map.transpose() * &adj.x)
}

/// Midpoint-quadrature load of a nodal profile against the interior hats:
/// `load_k = dt/4·(g_{k−1} + 2g_k + g_{k+1})`.
pub(crate) fn midpoint_load(grid: &TimeGrid, g: &DMatrix<f64>) -> DMatrix<f64> {
    let m = grid.steps() - 1;
    let p = g.nrows();
    let dt = grid.dt();
    DMatrix::from_fn(p, m, |c, i| {
        let k = i + 1;
        dt / 4.0 * (g[(c, k - 1)] + 2.0 * g[(c, k)] + g[(c, k + 1)])
    })
}

/// Right-hand side of the linear solve for a given multiplier:
/// `rhs_k = −load_k + γ(λ_k − λ_{k−1})`.
fn assemble_rhs(
    op: &H1Operator,
    base_rhs: &DMatrix<f64>,
    lambda: Option<&DMatrix<f64>>,
) -> DMatrix<f64> {
    let mut rhs = base_rhs.clone();
    if let Some(l) = lambda {
        let gamma = op.weights.gamma();
        let m = rhs.ncols();
        for c in 0..rhs.nrows() {
            for i in 0..m {
                let k = i + 1;
                rhs[(c, i)] += gamma * (l[(c, k)] - l[(c, k - 1)]);
            }
        }
    }
    rhs
}

/// Solves the smooth inner problem for a fixed multiplier field.
pub fn linear_inner_solve(
    adj: &Trajectory,
    lambda: Option<&MultiplierField>,
    op: &H1Operator,
    control_map: &DMatrix<f64>,
) -> Result<ControlSignal> {
    op.grid.check_same(adj.grid(), "operator vs adjoint trajectory")?;
    let g = control_profile(adj, control_map)?;
    if let Some(l) = lambda {
        op.grid.check_same(l.grid(), "operator vs multiplier")?;
    }
    Ok(linear_solve_profile(op, &g, lambda.map(|l| l.values())))
}

/// Same solve from a precomputed profile `g = ᵗB P`.
pub fn linear_solve_profile(
    op: &H1Operator,
    g: &DMatrix<f64>,
    lambda: Option<&DMatrix<f64>>,
) -> ControlSignal {
    let base_rhs = -midpoint_load(&op.grid, g);
    let rhs = assemble_rhs(op, &base_rhs, lambda);
    ControlSignal::from_interior(op.grid.clone(), &op.solve(&rhs))
}

/// Options for [`uzawa_solve`]. `rho = None` uses the provable default
/// `β/γ` (midpoint of the convergence interval `(0, 2β/γ)`).
#[derive(Debug, Clone, Copy)]
pub struct UzawaOptions {
    pub rho: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub polish: bool,
}

impl Default for UzawaOptions {
    fn default() -> Self {
        Self {
            rho: None,
            tol: 1e-8,
            max_iter: 100_000,
            polish: true,
        }
    }
}

/// Solution of the inner variational inequality.
#[derive(Debug, Clone)]
pub struct UzawaSolution {
    pub u: ControlSignal,
    pub lambda: MultiplierField,
    pub iters: usize,
    pub converged: bool,
}

/// Projected Uzawa iteration on the multiplier, with periodic active-set
/// polish. See the module docs for the scheme.
pub fn uzawa_solve(
    adj: &Trajectory,
    op: &H1Operator,
    control_map: &DMatrix<f64>,
    opts: &UzawaOptions,
) -> Result<UzawaSolution> {
    op.grid.check_same(adj.grid(), "operator vs adjoint trajectory")?;
    let g = control_profile(adj, control_map)?;
    uzawa_solve_profile(op, &g, opts)
}

/// [`uzawa_solve`] from a precomputed profile `g = ᵗB P`.
pub fn uzawa_solve_profile(
    op: &H1Operator,
    g: &DMatrix<f64>,
    opts: &UzawaOptions,
) -> Result<UzawaSolution> {
    uzawa_solve_profile_warm(op, g, opts, None)
}

/// [`uzawa_solve_profile`] with a warm-start multiplier (projected onto the
/// ball before use). Callers solving a family of nearby problems — the outer
/// controllability loop — pass the previous multiplier here.
pub fn uzawa_solve_profile_warm(
    op: &H1Operator,
    g: &DMatrix<f64>,
    opts: &UzawaOptions,
    warm: Option<&DMatrix<f64>>,
) -> Result<UzawaSolution> {
    let grid = op.grid.clone();
    let p = op.p;
    let steps = grid.steps();
    let dt = grid.dt();
    let gamma = op.weights.gamma();
    if g.nrows() != p || g.ncols() != steps + 1 {
        return Err(Error::DimensionMismatch(format!(
            "profile is {}x{}, expected {p}x{}",
            g.nrows(),
            g.ncols(),
            steps + 1
        )));
    }

    let base_rhs = -midpoint_load(&grid, g);

    if gamma == 0.0 {
        let u = op.solve(&assemble_rhs(op, &base_rhs, None));
        return Ok(UzawaSolution {
            u: ControlSignal::from_interior(grid.clone(), &u),
            lambda: MultiplierField::zero(grid, p),
            iters: 1,
            converged: true,
        });
    }

    let rho0 = opts.rho.unwrap_or(op.weights.beta() / gamma);
    if !(rho0.is_finite() && rho0 > 0.0) {
        return Err(Error::InvalidParameter(format!("rho must be > 0, got {rho0}")));
    }
    let mut rho = rho0;
    let rho_floor = rho0 / 4096.0;

    let mut lambda = match warm {
        Some(w) if w.nrows() == p && w.ncols() == steps => {
            let mut l = w.clone();
            for e in 0..steps {
                let norm = l.column(e).norm();
                if norm > 1.0 {
                    let col = l.column(e) / norm;
                    l.set_column(e, &col);
                }
            }
            l
        }
        _ => DMatrix::zeros(p, steps),
    };
    let mut u = op.solve(&assemble_rhs(op, &base_rhs, Some(&lambda)));
    let mut next_polish = 50usize;
    let mut prev_metric = f64::INFINITY;
    let mut non_decreasing = 0usize;
    let mut converged = false;
    let mut iters = 0usize;

    for iter in 1..=opts.max_iter {
        iters = iter;
        let slopes = interior_slopes(&u, dt);
        // Projected dual ascent.
        let mut lambda_change: f64 = 0.0;
        for e in 0..steps {
            let mut col = lambda.column(e).into_owned();
            for c in 0..p {
                col[c] += rho * slopes[(c, e)];
            }
            let norm = col.norm();
            if norm > 1.0 {
                col /= norm;
            }
            lambda_change = lambda_change.max((&col - lambda.column(e)).amax());
            lambda.set_column(e, &col);
        }
        let u_new = op.solve(&assemble_rhs(op, &base_rhs, Some(&lambda)));
        let u_change = (&u_new - &u).amax() / (1.0 + u.amax());
        u = u_new;

        let slopes = interior_slopes(&u, dt);
        let (comp_res, max_slope) = complementarity(&lambda, &slopes);
        if lambda_change <= opts.tol
            && u_change <= opts.tol
            && comp_res <= 10.0 * opts.tol * max_slope.max(f64::MIN_POSITIVE)
        {
            converged = true;
            break;
        }

        // Halve the step when progress stalls (guards a caller-chosen rho
        // outside the provable interval).
        let metric = lambda_change.max(u_change);
        if metric >= prev_metric {
            non_decreasing += 1;
            if non_decreasing >= 3 && rho > rho_floor {
                rho *= 0.5;
                non_decreasing = 0;
            }
        } else {
            non_decreasing = 0;
        }
        prev_metric = metric;

        if opts.polish && iter == next_polish {
            next_polish *= 2;
            if let Some((pu, pl)) = attempt_polish(op, &base_rhs, &lambda, &u, opts.tol) {
                u = pu;
                lambda = pl;
                converged = true;
                break;
            }
        }
    }

    // Snap plateaus exactly once the iteration settles.
    if opts.polish && converged {
        if let Some((pu, pl)) = attempt_polish(op, &base_rhs, &lambda, &u, opts.tol) {
            u = pu;
            lambda = pl;
        }
    }

    Ok(UzawaSolution {
        u: ControlSignal::from_interior(grid.clone(), &u),
        lambda: MultiplierField::new(grid, lambda)?,
        iters,
        converged,
    })
}

/// Element slopes of interior nodal values (zero boundary implied).
fn interior_slopes(interior: &DMatrix<f64>, dt: f64) -> DMatrix<f64> {
    let p = interior.nrows();
    let m = interior.ncols();
    DMatrix::from_fn(p, m + 1, |c, e| {
        let right = if e < m { interior[(c, e)] } else { 0.0 };
        let left = if e > 0 { interior[(c, e - 1)] } else { 0.0 };
        (right - left) / dt
    })
}

/// Max complementarity defect `|(λ_e, s_e)| − |s_e||` and max slope norm.
fn complementarity(lambda: &DMatrix<f64>, slopes: &DMatrix<f64>) -> (f64, f64) {
    let mut worst: f64 = 0.0;
    let mut max_slope: f64 = 0.0;
    for e in 0..slopes.ncols() {
        let s = slopes.column(e);
        let norm = s.norm();
        worst = worst.max((lambda.column(e).dot(&s) - norm).abs());
        max_slope = max_slope.max(norm);
    }
    (worst, max_slope)
}

/// Discrete objective `½uᵀAu + γ·TV − base_rhsᵀu` (what the VI minimizes).
fn objective(op: &H1Operator, base_rhs: &DMatrix<f64>, interior: &DMatrix<f64>) -> f64 {
    objective_with_scale(op, base_rhs, interior).0
}

/// Objective together with the sum of its terms' magnitudes — the scale at
/// which f64 rounding hides objective differences.
pub(crate) fn objective_with_scale(
    op: &H1Operator,
    base_rhs: &DMatrix<f64>,
    interior: &DMatrix<f64>,
) -> (f64, f64) {
    let au = op.apply(interior);
    let mut quad = 0.0;
    let mut load = 0.0;
    for c in 0..interior.nrows() {
        for k in 0..interior.ncols() {
            quad += 0.5 * interior[(c, k)] * au[(c, k)];
            load += base_rhs[(c, k)] * interior[(c, k)];
        }
    }
    let dt = op.grid.dt();
    let slopes = interior_slopes(interior, dt);
    let mut tv = 0.0;
    for e in 0..slopes.ncols() {
        tv += slopes.column(e).norm() * dt;
    }
    tv *= op.weights.gamma();
    (quad + tv - load, quad.abs() + tv + load.abs())
}

/// Saturation pattern of a multiplier field: per-element flag plus the unit
/// direction of each saturated column (zero column where unsaturated).
pub(crate) fn classify_face(lambda: &DMatrix<f64>) -> (Vec<bool>, DMatrix<f64>) {
    let (p, steps) = lambda.shape();
    let mut active = vec![false; steps];
    let mut sigma = DMatrix::zeros(p, steps);
    for e in 0..steps {
        let norm = lambda.column(e).norm();
        if norm >= 1.0 - ACTIVE_TOL {
            active[e] = true;
            sigma.set_column(e, &(lambda.column(e) / norm));
        }
    }
    (active, sigma)
}

/// Equality-constrained quadratic on a fixed saturation face: elements not
/// in `active` are pinned flat (their end nodes merge into one group) and
/// the active elements carry the frozen loads `γ·σ_e`. Jointly linear in
/// `(base_rhs, sigma)`. Returns interior nodal values; `None` when the
/// reduced system degenerates.
pub(crate) fn face_solve(
    op: &H1Operator,
    base_rhs: &DMatrix<f64>,
    active: &[bool],
    sigma: &DMatrix<f64>,
) -> Option<DMatrix<f64>> {
    let grid = &op.grid;
    let steps = grid.steps();
    let p = op.p;
    let dt = grid.dt();
    let gamma = op.weights.gamma();

    // Group ids per node; plateau elements glue their end nodes together.
    let mut gid = vec![0usize; steps + 1];
    for e in 0..steps {
        gid[e + 1] = if active[e] { gid[e] + 1 } else { gid[e] };
    }
    let n_groups = gid[steps] + 1;
    let pinned_left = gid[0];
    let pinned_right = gid[steps];

    // Variable index per group (pinned groups hold the boundary value 0).
    let mut var_of = vec![usize::MAX; n_groups];
    let mut n_var = 0usize;
    for g in 0..n_groups {
        if g != pinned_left && g != pinned_right {
            var_of[g] = n_var;
            n_var += 1;
        }
    }

    // Element matrices of A = α·mass + β·stiffness.
    let a_diag = op.weights.alpha() * dt / 3.0 + op.weights.beta() / dt;
    let a_off = op.weights.alpha() * dt / 6.0 - op.weights.beta() / dt;

    let mut red_diag = vec![0.0; n_var];
    let mut red_off = vec![0.0; n_var.saturating_sub(1)];
    for e in 0..steps {
        let (g_l, g_r) = (gid[e], gid[e + 1]);
        let v_l = var_of.get(g_l).copied().unwrap_or(usize::MAX);
        let v_r = var_of.get(g_r).copied().unwrap_or(usize::MAX);
        if g_l == g_r {
            if v_l != usize::MAX {
                // Whole element inside one group: rows and columns collapse.
                red_diag[v_l] += 2.0 * a_diag + 2.0 * a_off;
            }
        } else {
            if v_l != usize::MAX {
                red_diag[v_l] += a_diag;
            }
            if v_r != usize::MAX {
                red_diag[v_r] += a_diag;
            }
            if v_l != usize::MAX && v_r != usize::MAX {
                debug_assert_eq!(v_r, v_l + 1);
                red_off[v_l] += a_off;
            }
        }
    }

    // Nodal rhs including the active elements' fixed sign loads.
    let mut rhs_nodes = base_rhs.clone();
    for e in 0..steps {
        if !active[e] {
            continue;
        }
        for c in 0..p {
            if e >= 1 {
                rhs_nodes[(c, e - 1)] += gamma * sigma[(c, e)];
            }
            if e + 1 <= steps - 1 {
                rhs_nodes[(c, e)] -= gamma * sigma[(c, e)];
            }
        }
    }

    // Reduced rhs: sum nodal equations over each group.
    let mut red_rhs = DMatrix::zeros(p, n_var);
    for k in 1..steps {
        let v = var_of.get(gid[k]).copied().unwrap_or(usize::MAX);
        if v != usize::MAX {
            for c in 0..p {
                red_rhs[(c, v)] += rhs_nodes[(c, k - 1)];
            }
        }
    }

    // Solve the reduced SPD tridiagonal per component.
    let mut group_values = DMatrix::zeros(p, n_groups);
    if n_var > 0 {
        if red_diag.iter().any(|&d| d <= 0.0) {
            return None;
        }
        let fact = Tridiag::factor(&red_diag, &red_off);
        let mut scratch = vec![0.0; n_var];
        for c in 0..p {
            for v in 0..n_var {
                scratch[v] = red_rhs[(c, v)];
            }
            fact.solve(&mut scratch);
            for g in 0..n_groups {
                let v = var_of[g];
                if v != usize::MAX {
                    group_values[(c, g)] = scratch[v];
                }
            }
        }
    }

    // Scatter to interior nodes; nodes of one group share the same f64, so
    // plateau slopes are exactly zero.
    let mut interior = DMatrix::zeros(p, steps - 1);
    for k in 1..steps {
        for c in 0..p {
            interior[(c, k - 1)] = group_values[(c, gid[k])];
        }
    }
    Some(interior)
}

/// Active-set polish: merge plateau runs (elements with `|λ| < 1 − tol`),
/// solve the equality-constrained quadratic exactly, recover the interior
/// multipliers from the nodal stationarity chain, and verify. Returns the
/// polished pair only when it is the exact discrete solution.
fn attempt_polish(
    op: &H1Operator,
    base_rhs: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    current: &DMatrix<f64>,
    tol: f64,
) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let grid = &op.grid;
    let steps = grid.steps();
    let p = op.p;
    let dt = grid.dt();
    let gamma = op.weights.gamma();

    let (active, sigma) = classify_face(lambda);
    if active.iter().all(|&a| a) {
        return None; // nothing to merge; the plain iteration handles it
    }
    let interior = face_solve(op, base_rhs, &active, &sigma)?;

    // Recover plateau multipliers from the stationarity chain.
    let au = op.apply(&interior);
    let defect = |c: usize, k: usize| (au[(c, k - 1)] - base_rhs[(c, k - 1)]) / gamma;
    let mut full_lambda = sigma.clone();
    let mut e = 0usize;
    while e < steps {
        if active[e] {
            e += 1;
            continue;
        }
        let mut run_end = e;
        while run_end + 1 < steps && !active[run_end + 1] {
            run_end += 1;
        }
        if e == 0 && run_end == steps - 1 {
            // Fully flat: one-parameter family per component; center it.
            for c in 0..p {
                let mut chain = vec![0.0; steps];
                for k in 1..steps {
                    chain[k] = chain[k - 1] + defect(c, k);
                }
                let hi = chain.iter().cloned().fold(f64::MIN, f64::max);
                let lo = chain.iter().cloned().fold(f64::MAX, f64::min);
                let shift = -(hi + lo) / 2.0;
                for k in 0..steps {
                    full_lambda[(c, k)] = chain[k] + shift;
                }
            }
        } else if e == 0 {
            // Left-pinned run: anchored on the right active element.
            for c in 0..p {
                let mut lam = full_lambda[(c, run_end + 1)];
                for k in (1..=run_end + 1).rev() {
                    lam -= defect(c, k);
                    full_lambda[(c, k - 1)] = lam;
                }
            }
        } else {
            // Anchored on the left active element; node equations march right.
            for c in 0..p {
                let mut lam = full_lambda[(c, e - 1)];
                for k in e..=run_end {
                    lam += defect(c, k);
                    full_lambda[(c, k)] = lam;
                }
            }
        }
        e = run_end + 1;
    }

    // Verify feasibility and exact complementarity of the polished pair.
    for e in 0..steps {
        let norm = full_lambda.column(e).norm();
        if !(norm <= 1.0 + POLISH_FEAS_TOL) {
            return None;
        }
        if norm > 1.0 {
            let col = full_lambda.column(e) / norm;
            full_lambda.set_column(e, &col);
        }
    }
    let slopes = interior_slopes(&interior, dt);
    let (comp_res, max_slope) = complementarity(&full_lambda, &slopes);
    // Accept only comfortably inside the complementarity contract the plain
    // iteration promises (10·tol·max-slope).
    if comp_res > 5.0 * tol * max_slope {
        return None;
    }
    // The polished point must not lose ground on the true objective.
    if objective(op, base_rhs, &interior) > objective(op, base_rhs, current) + 1e-12 {
        return None;
    }
    Some((interior, full_lambda))
}

/// Solution of the smoothed inner problem.
#[derive(Debug, Clone)]
pub struct RegularizedSolution {
    pub u: ControlSignal,
    pub iters: usize,
    pub converged: bool,
}

/// Lagged-diffusivity fixed point for the η-regularized problem: the TV term
/// is replaced by the extra element diffusivity `γ/√(η + |u̇|²)`, refactorized
/// each sweep. Independent of the duality path; used as its oracle.
pub fn regularized_solve(
    adj: &Trajectory,
    op: &H1Operator,
    control_map: &DMatrix<f64>,
    eta: f64,
    tol: f64,
) -> Result<RegularizedSolution> {
    op.grid.check_same(adj.grid(), "operator vs adjoint trajectory")?;
    let g = control_profile(adj, control_map)?;
    regularized_solve_profile(op, &g, eta, tol)
}

/// [`regularized_solve`] from a precomputed profile.
pub fn regularized_solve_profile(
    op: &H1Operator,
    g: &DMatrix<f64>,
    eta: f64,
    tol: f64,
) -> Result<RegularizedSolution> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be > 0, got {eta}")));
    }
    let grid = op.grid.clone();
    let p = op.p;
    let steps = grid.steps();
    let dt = grid.dt();
    let m = steps - 1;
    let gamma = op.weights.gamma();
    let base_rhs = -midpoint_load(&grid, g);

    let mut u = op.solve(&base_rhs);
    if gamma == 0.0 {
        return Ok(RegularizedSolution {
            u: ControlSignal::from_interior(grid, &u),
            iters: 1,
            converged: true,
        });
    }

    let mut converged = false;
    let mut iters = 0usize;
    let mut diag = vec![0.0; m];
    let mut off = vec![0.0; m.saturating_sub(1)];
    let mut scratch = vec![0.0; m];
    for iter in 1..=REGULARIZED_MAX_ITER {
        iters = iter;
        let slopes = interior_slopes(&u, dt);
        let weight =
            |e: usize| gamma / (eta + slopes.column(e).norm_squared()).sqrt();
        let (a_diag, a_off) = op.bands();
        for k in 0..m {
            // Node k+1 touches elements k and k+1.
            diag[k] = a_diag + (weight(k) + weight(k + 1)) / dt;
            if k + 1 < m {
                off[k] = a_off - weight(k + 1) / dt;
            }
        }
        let fact = Tridiag::factor(&diag, &off);
        let mut u_new = DMatrix::zeros(p, m);
        for c in 0..p {
            for k in 0..m {
                scratch[k] = base_rhs[(c, k)];
            }
            fact.solve(&mut scratch);
            for k in 0..m {
                u_new[(c, k)] = scratch[k];
            }
        }
        let change = (&u_new - &u).amax() / (1.0 + u.amax());
        u = u_new;
        if change <= tol {
            converged = true;
            break;
        }
    }
    Ok(RegularizedSolution {
        u: ControlSignal::from_interior(grid, &u),
        iters,
        converged,
    })
}
