//! Outer controllability loop: find adjoint initial data `Φ ∈ R^{2N}` whose
//! inner control drives the state exactly to rest at `T`.
//!
//! For each basis vector `e_i` the homogeneous adjoint `M Q̈ − ᵗC Q̇ + ᵗK Q = 0`
//! is solved once from `(Q(0), Q̇(0)) = e_i` and cached. The nonlinear operator
//!
//! ```text
//! Λ(Φ)_i = −∫ (ᵗB Q_i, u(Φ)),     u(Φ) from the inner problem with ᵗB Q(Φ),
//! ```
//!
//! is monotone, and `Λ(Φ) = L` (with `L` built from the forcing and initial
//! data) is equivalent to `X(T) = Ẋ(T) = 0`. The discrete scheme satisfies a
//! summation-by-parts identity under the midpoint pairing, so the residual
//! `Λ(Φ) − L` is available from the terminal state of one forward solve:
//!
//! ```text
//! r_i = −(MẊ(T) + CX(T), Q_i(T)) + (MX(T), Q̇_i(T)),
//! ```
//!
//! exact to rounding. Moreover `Λ(Φ) − L` is the exact gradient of the
//! convex dual energy `E(Φ) = −J(u(Φ); Φ) − (L, Φ)` (envelope theorem; `J`
//! is the inner objective at its minimizer), so the root is the minimum of a
//! computable potential. The solver iterates `Φ ← Φ − ρ(Λ⁰)⁻¹ r` with the
//! γ = 0 linearization `Λ⁰` as preconditioner, globalized by an Armijo line
//! search on `E` — ρ halved inside the search, grown on clean accepts,
//! restored after three accepted steps.

use nalgebra::{DMatrix, DVector, LU};

use crate::dynamics::{ControllabilityReport, SecondOrderSystem, TimeGrid};
use crate::error::{Error, Result};
use crate::inner::{
    self, control_cost, linear_solve_profile, ControlSignal, CostWeights, H1Operator,
    MultiplierField, UzawaOptions, UzawaSolution,
};
use crate::integrator::{midpoint_inner, NewmarkParams, NewmarkSolver, Trajectory};

/// Adjoint initial data `(Φ₀, Φ₁)` stacked as one `2N` vector, position part
/// first.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiVector {
    data: DVector<f64>,
}

impl PhiVector {
    pub fn new(data: DVector<f64>) -> Result<Self> {
        if data.len() % 2 != 0 || data.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "phi has length {}, expected 2N",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("phi has non-finite entries".into()));
        }
        Ok(Self { data })
    }

    pub fn zero(n: usize) -> Self {
        Self {
            data: DVector::zeros(2 * n),
        }
    }

    pub fn from_parts(phi0: &DVector<f64>, phi1: &DVector<f64>) -> Result<Self> {
        if phi0.len() != phi1.len() {
            return Err(Error::DimensionMismatch(format!(
                "phi parts of length {} and {}",
                phi0.len(),
                phi1.len()
            )));
        }
        let n = phi0.len();
        let mut data = DVector::zeros(2 * n);
        data.rows_mut(0, n).copy_from(phi0);
        data.rows_mut(n, n).copy_from(phi1);
        Self::new(data)
    }

    pub fn n(&self) -> usize {
        self.data.len() / 2
    }

    /// Initial adjoint position `Φ₀`.
    pub fn phi0(&self) -> DVector<f64> {
        self.data.rows(0, self.n()).into_owned()
    }

    /// Initial adjoint velocity `Φ₁`.
    pub fn phi1(&self) -> DVector<f64> {
        self.data.rows(self.n(), self.n()).into_owned()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.data
    }
}

/// The `2N` homogeneous adjoint basis solutions with everything the outer
/// loop pairs against: full trajectories, control-space profiles `ᵗB Q_i`,
/// and terminal snapshots.
#[derive(Debug)]
pub struct FundamentalCache {
    grid: TimeGrid,
    n: usize,
    p: usize,
    basis: Vec<Trajectory>,
    profiles: Vec<DMatrix<f64>>,
    term_q: DMatrix<f64>,
    term_qdot: DMatrix<f64>,
}

/// Runs the `2N` adjoint solves for unit initial data.
pub fn build_cache(sys: &SecondOrderSystem, params: NewmarkParams) -> Result<FundamentalCache> {
    let n = sys.n();
    let p = sys.p();
    let grid = sys.grid().clone();
    let solver = NewmarkSolver::adjoint(sys, params)?;
    let bt = sys.control_map.transpose();
    let mut basis = Vec::with_capacity(2 * n);
    let mut profiles = Vec::with_capacity(2 * n);
    let mut term_q = DMatrix::zeros(n, 2 * n);
    let mut term_qdot = DMatrix::zeros(n, 2 * n);
    for i in 0..2 * n {
        let mut phi0 = DVector::zeros(n);
        let mut phi1 = DVector::zeros(n);
        if i < n {
            phi0[i] = 1.0;
        } else {
            phi1[i - n] = 1.0;
        }
        let q = solver.solve_adjoint(&phi0, &phi1);
        term_q.set_column(i, &q.terminal_position());
        term_qdot.set_column(i, &q.terminal_velocity());
        profiles.push(&bt * &q.x);
        basis.push(q);
    }
    Ok(FundamentalCache {
        grid,
        n,
        p,
        basis,
        profiles,
        term_q,
        term_qdot,
    })
}

impl FundamentalCache {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn basis(&self) -> &[Trajectory] {
        &self.basis
    }

    /// `ᵗB Q(Φ)` by superposition from the cached basis profiles.
    pub fn profile_for(&self, phi: &PhiVector) -> Result<DMatrix<f64>> {
        if phi.n() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "phi for {} dofs, cache has {}",
                phi.n(),
                self.n
            )));
        }
        let mut g = DMatrix::zeros(self.p, self.grid.steps() + 1);
        for (i, prof) in self.profiles.iter().enumerate() {
            let c = phi.as_vector()[i];
            if c != 0.0 {
                g += prof * c;
            }
        }
        Ok(g)
    }

    /// Residual from a terminal state snapshot, exact for any control by the
    /// discrete summation-by-parts identity.
    fn residual_from_terminal(
        &self,
        sys: &SecondOrderSystem,
        x_t: &DVector<f64>,
        v_t: &DVector<f64>,
    ) -> DVector<f64> {
        let momentum = &sys.mass * v_t + &sys.damping * x_t;
        let m_x = &sys.mass * x_t;
        let mut r = DVector::zeros(2 * self.n);
        for i in 0..2 * self.n {
            r[i] = -momentum.dot(&self.term_q.column(i).into_owned())
                + m_x.dot(&self.term_qdot.column(i).into_owned());
        }
        r
    }
}

/// Solves the inner problem for the adjoint data `Φ`.
pub fn inner_from_phi(
    cache: &FundamentalCache,
    op: &H1Operator,
    phi: &PhiVector,
    opts: &UzawaOptions,
) -> Result<UzawaSolution> {
    let g = cache.profile_for(phi)?;
    inner::uzawa_solve_profile(op, &g, opts)
}

/// Evaluates `Λ(Φ)` by quadrature against the cached basis profiles.
/// Returns the vector and the inner solution it was built from.
pub fn apply_lambda(
    cache: &FundamentalCache,
    op: &H1Operator,
    phi: &PhiVector,
    opts: &UzawaOptions,
) -> Result<(DVector<f64>, UzawaSolution)> {
    let sol = inner_from_phi(cache, op, phi, opts)?;
    let value = pair_against_basis(cache, &sol.u)?;
    Ok((value, sol))
}

/// The linear pairing `u ↦ (−∫(ᵗB Q_i, u))_i` shared by `Λ` and the
/// preconditioner columns.
pub fn pair_against_basis(cache: &FundamentalCache, u: &ControlSignal) -> Result<DVector<f64>> {
    cache.grid.check_same(u.grid(), "cache vs control")?;
    let mut out = DVector::zeros(2 * cache.n);
    for (i, prof) in cache.profiles.iter().enumerate() {
        out[i] = -midpoint_inner(&cache.grid, prof, u.values())?;
    }
    Ok(out)
}

/// Right-hand side `L`: `L_i = ∫(F, Q_i) + (MẊ₀ + CX₀, δΦ₀) − (MX₀, δΦ₁)`.
pub fn build_l(cache: &FundamentalCache, sys: &SecondOrderSystem) -> Result<DVector<f64>> {
    cache.grid.check_same(sys.grid(), "cache vs system")?;
    let n = cache.n;
    let momentum = &sys.mass * &sys.x1 + &sys.damping * &sys.x0;
    let m_x0 = &sys.mass * &sys.x0;
    let mut l = DVector::zeros(2 * n);
    for i in 0..2 * n {
        l[i] = midpoint_inner(&cache.grid, &sys.forcing, &cache.basis[i].x)?;
        if i < n {
            l[i] += momentum[i];
        } else {
            l[i] -= m_x0[i - n];
        }
    }
    Ok(l)
}

/// Residual `Λ(Φ) − L` for the control `u`, evaluated from the terminal
/// state of one forward solve.
pub fn residual(
    cache: &FundamentalCache,
    sys: &SecondOrderSystem,
    u: &ControlSignal,
) -> Result<DVector<f64>> {
    let traj = crate::integrator::newmark_forward(sys, Some(u), NewmarkParams::default())?;
    Ok(cache.residual_from_terminal(sys, &traj.terminal_position(), &traj.terminal_velocity()))
}

/// The assembled γ = 0 operator `Λ⁰` (dense, symmetric positive semidefinite).
pub fn assemble_precond_matrix(cache: &FundamentalCache, op: &H1Operator) -> Result<DMatrix<f64>> {
    cache.grid.check_same(op.grid(), "cache vs operator")?;
    if cache.p != op.p() {
        return Err(Error::DimensionMismatch(format!(
            "cache has {} channels, operator {}",
            cache.p,
            op.p()
        )));
    }
    let dim = 2 * cache.n;
    let mut mat = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let u_j = linear_solve_profile(op, &cache.profiles[j], None);
        let col = pair_against_basis(cache, &u_j)?;
        mat.set_column(j, &col);
    }
    Ok(mat)
}

/// Factorized preconditioner; `Identity` is the degenerate fallback.
#[derive(Debug)]
pub enum Preconditioner {
    Factored(LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
    Identity(usize),
}

impl Preconditioner {
    pub fn solve(&self, r: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Factored(lu) => lu.solve(r).expect("factorized matrix is invertible"),
            Self::Identity(_) => r.clone(),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Self::Identity(_))
    }
}

/// Assembles and factorizes `Λ⁰`. A numerically rank-deficient operator
/// (uncontrollable or degenerate system) is reported as
/// [`Error::PrecondSingular`]; callers may fall back to the identity.
pub fn assemble_precond(cache: &FundamentalCache, op: &H1Operator) -> Result<Preconditioner> {
    let mat = assemble_precond_matrix(cache, op)?;
    let dim = mat.nrows();
    let svd = mat.clone().svd(false, false);
    let sigma_max = svd.singular_values.max();
    let tol = dim as f64 * f64::EPSILON * sigma_max;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < dim {
        return Err(Error::PrecondSingular { rank, dim });
    }
    Ok(Preconditioner::Factored(mat.lu()))
}

/// Options for [`solve_exact_control`].
#[derive(Debug, Clone, Copy)]
pub struct OuterOptions {
    /// Step length in the preconditioned metric.
    pub rho: f64,
    /// Stagnation tolerance on `|ΔΦ| / (1 + |Φ|)`.
    pub tol_phi: f64,
    /// Terminal tolerance, relative to the initial mechanical energy
    /// (absolute when that energy is zero).
    pub tol_terminal: f64,
    pub max_outer: usize,
    pub inner: UzawaOptions,
}

impl Default for OuterOptions {
    fn default() -> Self {
        Self {
            rho: 1.0,
            tol_phi: 1e-10,
            tol_terminal: 1e-8,
            max_outer: 500,
            inner: UzawaOptions::default(),
        }
    }
}

/// Everything the solver found: adjoint data, control, multiplier, terminal
/// quality, and iteration diagnostics.
#[derive(Debug)]
pub struct OuterReport {
    pub phi: PhiVector,
    pub control: ControlSignal,
    pub multiplier: MultiplierField,
    /// `|X(T)|² + |Ẋ(T)|²` of the final forward solve.
    pub terminal_norm: f64,
    pub initial_energy: f64,
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    /// Preconditioned residual norms of the accepted iterates. Not strictly
    /// monotone: steps are accepted on dual-energy decrease, and the residual
    /// norm can rise across a change of the control's saturation pattern.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub controllability: ControllabilityReport,
    /// True when `Λ⁰` was numerically singular and the identity fallback ran.
    pub precond_fallback: bool,
}

#[derive(Clone)]
struct Evaluation {
    sol: UzawaSolution,
    r: DVector<f64>,
    terminal_norm: f64,
    /// Dual energy `E(Φ)`; `r` is its gradient.
    energy: f64,
    /// Magnitude of E's constituent terms — the f64 noise floor for
    /// comparing energies.
    scale: f64,
}

/// Direct solve of `Λ(Φ) = L` on the saturation face of `lambda`: with the
/// pattern and directions frozen, `Φ → u(Φ)` is affine, so the face image of
/// `Λ` is assembled column by column from constrained solves and inverted
/// outright. Near the root the face stops changing and one such step lands
/// on the solution — the plain preconditioned iteration only creeps there,
/// since `Λ⁰` misjudges the curvature of a mostly-flat control. Returns
/// `None` on a degenerate face (e.g. everything flat).
fn face_newton(
    cache: &FundamentalCache,
    op: &H1Operator,
    lambda: &DMatrix<f64>,
    l_vec: &DVector<f64>,
) -> Result<Option<DVector<f64>>> {
    let (active, sigma) = inner::classify_face(lambda);
    if !active.iter().any(|&a| a) {
        return Ok(None); // constant face: u ≡ 0 regardless of Φ
    }
    let dim = 2 * cache.n;
    let m = cache.grid.steps() - 1;
    let zero_rhs = DMatrix::zeros(cache.p, m);
    let zero_sigma = DMatrix::zeros(cache.p, cache.grid.steps());

    let Some(u_const) = inner::face_solve(op, &zero_rhs, &active, &sigma) else {
        return Ok(None);
    };
    let c_vec = pair_against_basis(
        cache,
        &ControlSignal::from_interior(cache.grid.clone(), &u_const),
    )?;

    let mut face_map = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let rhs_j = -inner::midpoint_load(&cache.grid, &cache.profiles[j]);
        let Some(u_j) = inner::face_solve(op, &rhs_j, &active, &zero_sigma) else {
            return Ok(None);
        };
        let col = pair_against_basis(
            cache,
            &ControlSignal::from_interior(cache.grid.clone(), &u_j),
        )?;
        face_map.set_column(j, &col);
    }
    Ok(face_map.lu().solve(&(l_vec - &c_vec)))
}

/// Drives `X(T) = Ẋ(T) = 0` by the preconditioned residual iteration
/// `Φ ← Φ − ρ(Λ⁰)⁻¹(Λ(Φ) − L)`, globalized by an Armijo line search on the
/// dual energy and accelerated by direct solves on settled saturation faces.
/// Non-convergence within `max_outer` is not an error: the best iterate is
/// returned with `converged = false`.
pub fn solve_exact_control(
    sys: &SecondOrderSystem,
    weights: &CostWeights,
    opts: &OuterOptions,
) -> Result<OuterReport> {
    let n = sys.n();
    let grid = sys.grid().clone();
    let params = NewmarkParams::default();
    let op = inner::assemble_h1_operators(&grid, sys.p(), weights)?;
    let cache = build_cache(sys, params)?;
    let controllability = sys.controllability_rank();

    let (precond, precond_fallback) = match assemble_precond(&cache, &op) {
        Ok(p) => (p, false),
        Err(Error::PrecondSingular { .. }) => (Preconditioner::Identity(2 * n), true),
        Err(e) => return Err(e),
    };

    let forward = NewmarkSolver::forward(sys, params)?;
    let initial_energy = sys.initial_energy();
    let tol_terminal_abs = opts.tol_terminal
        * if initial_energy > 0.0 {
            initial_energy
        } else {
            1.0
        };

    let l_vec = build_l(&cache, sys)?;

    let evaluate = |phi: &DVector<f64>, warm: Option<&DMatrix<f64>>| -> Result<Evaluation> {
        let g = cache.profile_for(&PhiVector::new(phi.clone())?)?;
        let sol = inner::uzawa_solve_profile_warm(&op, &g, &opts.inner, warm)?;
        let traj = forward.solve_forward(sys, Some(&sol.u))?;
        let x_t = traj.terminal_position();
        let v_t = traj.terminal_velocity();
        let r = cache.residual_from_terminal(sys, &x_t, &v_t);
        #[cfg(debug_assertions)]
        {
            // Summation-by-parts self-check: quadrature path vs terminal path.
            let lam = pair_against_basis(&cache, &sol.u)?;
            let defect = (&lam - &l_vec - &r).amax();
            debug_assert!(
                defect <= 1e-8 * (1.0 + r.amax()),
                "residual identity defect {defect}"
            );
        }
        let base_rhs = -inner::midpoint_load(&grid, &g);
        let (j, j_scale) = inner::objective_with_scale(&op, &base_rhs, &sol.u.interior());
        let l_phi = l_vec.dot(phi);
        Ok(Evaluation {
            sol,
            r,
            terminal_norm: x_t.norm_squared() + v_t.norm_squared(),
            energy: -j - l_phi,
            scale: j_scale + l_phi.abs(),
        })
    };

    let mut phi = DVector::zeros(2 * n);
    let mut eval = evaluate(&phi, None)?;
    let mut pr = precond.solve(&eval.r);
    let mut pr_norm = pr.norm();
    let mut residual_history = vec![pr_norm];
    let mut inner_iters_total = eval.sol.iters;
    let mut outer_iters = 0usize;
    let mut rho = opts.rho;
    let mut accepted_streak = 0usize;
    let rho_floor = opts.rho / 2f64.powi(40);
    let rho_ceil = opts.rho * 2f64.powi(40);

    // Every step is accepted on decrease of the dual energy E, the convex
    // potential whose gradient is the residual. E is computable from parts
    // already in hand, its descent cannot cycle, and on the dead zone (u ≡ 0
    // over a whole Φ region, so the residual is frozen) it stays exactly
    // linear, so full steps accept and the growing ρ crosses the zone.
    let mut best_term = eval.terminal_norm;
    let mut best: Option<(DVector<f64>, Evaluation)> = None;
    let mut last_rejected_newton: Option<DVector<f64>> = None;

    while eval.terminal_norm > tol_terminal_abs && outer_iters < opts.max_outer {
        // Direct solve on the current saturation face first: with the
        // pattern settled this lands on the root in one step where the
        // gradient flow only creeps. Accepted when it lowers E beyond its
        // rounding noise (or simply hits the target). The γ=0 problem is
        // linear and already handled exactly by the preconditioned step.
        let mut newton_accepted = false;
        if weights.gamma() > 0.0 {
            if let Some(phi_face) = face_newton(&cache, &op, eval.sol.lambda.values(), &l_vec)? {
                // An unchanged face reproposes the point just rejected;
                // don't pay another inner solve for it.
                let repeat = last_rejected_newton
                    .as_ref()
                    .is_some_and(|prev| prev == &phi_face);
                if !repeat {
                    let trial = evaluate(&phi_face, Some(eval.sol.lambda.values()))?;
                    inner_iters_total += trial.sol.iters;
                    let noise = f64::EPSILON * (eval.scale + trial.scale);
                    if trial.energy < eval.energy - noise
                        || trial.terminal_norm <= tol_terminal_abs
                    {
                        outer_iters += 1;
                        phi = phi_face;
                        eval = trial;
                        pr = precond.solve(&eval.r);
                        pr_norm = pr.norm();
                        residual_history.push(pr_norm);
                        last_rejected_newton = None;
                        newton_accepted = true;
                    } else {
                        last_rejected_newton = Some(phi_face);
                    }
                }
            }
        }

        if !newton_accepted {
            // Armijo line search on E along the preconditioned direction;
            // the slope −(P⁻¹r, r) is negative since Λ⁰ is SPD.
            let slope = -pr.dot(&eval.r);
            let mut accepted = None;
            let mut halved = false;
            while rho >= rho_floor {
                let phi_trial = &phi - &pr * rho;
                let trial = evaluate(&phi_trial, Some(eval.sol.lambda.values()))?;
                inner_iters_total += trial.sol.iters;
                if trial.energy <= eval.energy + 1e-4 * rho * slope
                    || trial.terminal_norm <= tol_terminal_abs
                {
                    accepted = Some((phi_trial, trial));
                    break;
                }
                rho *= 0.5;
                halved = true;
                accepted_streak = 0;
            }
            let Some((phi_new, trial)) = accepted else {
                break; // descent below the f64 floor of E
            };
            if !halved && rho < rho_ceil {
                rho *= 2.0;
            }
            accepted_streak += 1;
            if accepted_streak >= 3 && rho < opts.rho {
                rho = opts.rho;
                accepted_streak = 0;
            }
            outer_iters += 1;
            let phi_change = (&phi_new - &phi).norm();
            let stagnated = phi_change <= opts.tol_phi * (1.0 + phi.norm());
            phi = phi_new;
            eval = trial;
            pr = precond.solve(&eval.r);
            pr_norm = pr.norm();
            residual_history.push(pr_norm);
            if stagnated {
                break;
            }
        }

        if eval.terminal_norm < best_term {
            best_term = eval.terminal_norm;
            best = Some((phi.clone(), eval.clone()));
        }
    }

    // Hand back the best terminal iterate when the energy walk ended
    // elsewhere (E and the terminal defect are minimized together only at
    // the root itself).
    if let Some((phi_best, eval_best)) = best {
        if eval_best.terminal_norm < eval.terminal_norm {
            phi = phi_best;
            eval = eval_best;
        }
    }

    let converged = eval.terminal_norm <= tol_terminal_abs;
    Ok(OuterReport {
        phi: PhiVector::new(phi)?,
        control: eval.sol.u,
        multiplier: eval.sol.lambda,
        terminal_norm: eval.terminal_norm,
        initial_energy,
        outer_iters,
        inner_iters_total,
        residual_history,
        converged,
        controllability,
        precond_fallback,
    })
}

/// Direct γ = 0 control: solves `Λ⁰Φ = L` in one factorized solve and
/// returns the linear inner control for that `Φ`. The oracle the iterative
/// path is tested against.
pub fn direct_linear_control(
    cache: &FundamentalCache,
    sys: &SecondOrderSystem,
    op: &H1Operator,
) -> Result<(PhiVector, ControlSignal)> {
    let mat = assemble_precond_matrix(cache, op)?;
    let dim = mat.nrows();
    let l = build_l(cache, sys)?;
    let lu = mat.lu();
    let phi = lu.solve(&l).ok_or(Error::PrecondSingular { rank: 0, dim })?;
    let phi = PhiVector::new(phi)?;
    let g = cache.profile_for(&phi)?;
    let u = linear_solve_profile(op, &g, None);
    Ok((phi, u))
}

/// Verifies local minimality of a converged report's control among exact
/// controls: perturbs it with `n_probes` random `H¹₀` fields, projects each
/// back to exactness through a γ = 0 correction solve, and returns the
/// smallest probe-cost excess. Nonnegative output certifies minimality up to
/// sampling power.
pub fn minimum_cost_certificate(
    report: &OuterReport,
    sys: &SecondOrderSystem,
    weights: &CostWeights,
    n_probes: usize,
    seed: u64,
) -> Result<f64> {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    let grid = sys.grid().clone();
    let p = sys.p();
    let params = NewmarkParams::default();
    let cache = build_cache(sys, params)?;
    let op = inner::assemble_h1_operators(&grid, p, weights)?;
    let precond_mat = assemble_precond_matrix(&cache, &op)?;
    let lu = precond_mat.lu();
    if !lu.is_invertible() {
        return Err(Error::PrecondSingular {
            rank: 0,
            dim: 2 * sys.n(),
        });
    }

    let base_cost = control_cost(&report.control, weights);
    let amplitude = 0.05 * (1.0 + report.control.sup_norm());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_excess = f64::INFINITY;
    let steps = grid.steps();
    for _ in 0..n_probes {
        // Smooth random perturbation; interior-only padding pins the ends.
        let modes: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut interior = DMatrix::zeros(p, steps - 1);
        for k in 1..steps {
            let s = grid.node(k) / grid.horizon();
            for c in 0..p {
                let val: f64 = modes
                    .iter()
                    .enumerate()
                    .map(|(j, a)| {
                        a * ((j + 1) as f64 * std::f64::consts::PI * s + 0.7 * c as f64).sin()
                    })
                    .sum();
                interior[(c, k - 1)] = amplitude * val;
            }
        }
        let candidate = ControlSignal::from_interior(grid.clone(), &interior);
        let mut probe_vals = report.control.values() + candidate.values();
        // Project back to exactness: Λ⁰ Φ_c = −residual(candidate + u*).
        let probe = ControlSignal::new(grid.clone(), probe_vals.clone())?;
        let r = residual(&cache, sys, &probe)?;
        let phi_c = lu.solve(&(-&r)).expect("checked invertible");
        let phi_c = PhiVector::new(phi_c)?;
        let correction = linear_solve_profile(&op, &cache.profile_for(&phi_c)?, None);
        probe_vals += correction.values();
        let probe = ControlSignal::new(grid.clone(), probe_vals)?;
        min_excess = min_excess.min(control_cost(&probe, weights) - base_cost);
    }
    Ok(min_excess)
}
