//! Newmark time integration for the state and adjoint equations, plus the
//! nodal quadratures used to pair trajectories with controls.
//!
//! With the default parameters (β = 1/4, γ = 1/2) the scheme is algebraically
//! the trapezoidal rule on the first-order form: both `x` and `v` follow
//! trapezoidal updates and the nodal accelerations satisfy the equation of
//! motion exactly at every node. Two consequences are load-bearing here:
//! the scheme conserves quadratic invariants of undamped systems, and the
//! state/adjoint summation-by-parts identity is exact under [`midpoint_inner`]
//! (see the outer-loop residual identity).

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::dynamics::{SecondOrderSystem, TimeGrid};
use crate::error::{Error, Result};
use crate::inner::ControlSignal;

/// Newmark parameters; `2β ≥ γ ≥ 1/2` (unconditional stability).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewmarkParams {
    beta: f64,
    gamma: f64,
}

impl NewmarkParams {
    pub fn new(beta: f64, gamma: f64) -> Result<Self> {
        if !(beta.is_finite() && gamma.is_finite()) || gamma < 0.5 || 2.0 * beta < gamma {
            return Err(Error::InvalidParameter(format!(
                "Newmark parameters must satisfy 2β ≥ γ ≥ 1/2, got β={beta}, γ={gamma}"
            )));
        }
        Ok(Self { beta, gamma })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

impl Default for NewmarkParams {
    /// Average acceleration: β = 1/4, γ = 1/2.
    fn default() -> Self {
        Self {
            beta: 0.25,
            gamma: 0.5,
        }
    }
}

/// Nodal displacements, velocities and accelerations, one column per node.
///
/// Invariant: column zero satisfies the initial-acceleration relation
/// `M a₀ = f(0) − C v₀ − K x₀` of the equation the trajectory was produced by.
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: TimeGrid,
    pub x: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub a: DMatrix<f64>,
}

impl Trajectory {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn terminal_position(&self) -> DVector<f64> {
        self.x.column(self.grid.steps()).into_owned()
    }

    pub fn terminal_velocity(&self) -> DVector<f64> {
        self.v.column(self.grid.steps()).into_owned()
    }
}

/// Which variant of the equation a solver marches.
///
/// `Forward`: `M ẍ + C ẋ + K x = f`. `AdjointForward`: `M q̈ − ᵗC q̇ + ᵗK q = 0`.
/// `Retrograde`: the adjoint under `s = T − t`, i.e. `M r̈ + ᵗC ṙ + ᵗK r = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Variant {
    Forward,
    AdjointForward,
    Retrograde,
}

/// One factorized Newmark marcher. Immutable once built; cheap to share
/// across many solves on the same system and grid.
#[derive(Debug)]
pub struct NewmarkSolver {
    grid: TimeGrid,
    params: NewmarkParams,
    cmat: DMatrix<f64>,
    kmat: DMatrix<f64>,
    lu: LU<f64, Dyn, Dyn>,
    mass_chol: nalgebra::Cholesky<f64, Dyn>,
    n: usize,
    variant: Variant,
}

impl NewmarkSolver {
    fn build(sys: &SecondOrderSystem, params: NewmarkParams, variant: Variant) -> Result<Self> {
        let (cmat, kmat) = match variant {
            Variant::Forward => (sys.damping.clone(), sys.stiffness.clone()),
            Variant::AdjointForward => (-sys.damping.transpose(), sys.stiffness.transpose()),
            Variant::Retrograde => (sys.damping.transpose(), sys.stiffness.transpose()),
        };
        let dt = sys.grid().dt();
        let effective =
            &sys.mass + &cmat * (params.gamma * dt) + &kmat * (params.beta * dt * dt);
        let lu = effective.lu();
        if !lu.is_invertible() {
            return Err(Error::SingularEffectiveMatrix { dt });
        }
        let mass_chol = nalgebra::Cholesky::new(sys.mass.clone())
            .expect("mass SPD validated at system construction");
        Ok(Self {
            grid: sys.grid().clone(),
            params,
            cmat,
            kmat,
            lu,
            mass_chol,
            n: sys.n(),
            variant,
        })
    }

    /// Factorized forward marcher for `M ẍ + C ẋ + K x = F + B u`.
    pub fn forward(sys: &SecondOrderSystem, params: NewmarkParams) -> Result<Self> {
        Self::build(sys, params, Variant::Forward)
    }

    /// Factorized marcher for the adjoint equation, integrated from `t = 0`.
    pub fn adjoint(sys: &SecondOrderSystem, params: NewmarkParams) -> Result<Self> {
        Self::build(sys, params, Variant::AdjointForward)
    }

    /// Factorized marcher for the adjoint equation integrated backwards from
    /// `t = T` (internally forward in `s = T − t`).
    pub fn retrograde(sys: &SecondOrderSystem, params: NewmarkParams) -> Result<Self> {
        Self::build(sys, params, Variant::Retrograde)
    }

    /// Marches the factorized recurrence from `(x0, v0)` with nodal loads
    /// (`None` means homogeneous).
    fn march(
        &self,
        x0: &DVector<f64>,
        v0: &DVector<f64>,
        loads: Option<&DMatrix<f64>>,
    ) -> Trajectory {
        let n = self.n;
        let steps = self.grid.steps();
        let dt = self.grid.dt();
        let beta = self.params.beta;
        let gamma = self.params.gamma;

        let load_at = |k: usize| -> DVector<f64> {
            match loads {
                Some(f) => f.column(k).into_owned(),
                None => DVector::zeros(n),
            }
        };

        let mut x = DMatrix::zeros(n, steps + 1);
        let mut v = DMatrix::zeros(n, steps + 1);
        let mut a = DMatrix::zeros(n, steps + 1);
        x.set_column(0, x0);
        v.set_column(0, v0);
        let a0 = self
            .mass_chol
            .solve(&(load_at(0) - &self.cmat * v0 - &self.kmat * x0));
        a.set_column(0, &a0);

        for k in 0..steps {
            let xk = x.column(k).into_owned();
            let vk = v.column(k).into_owned();
            let ak = a.column(k).into_owned();
            let x_pred = &xk + &vk * dt + &ak * (dt * dt * (0.5 - beta));
            let v_pred = &vk + &ak * (dt * (1.0 - gamma));
            let rhs = load_at(k + 1) - &self.cmat * &v_pred - &self.kmat * &x_pred;
            let a_next = self.lu.solve(&rhs).expect("effective matrix factorized");
            x.set_column(k + 1, &(&x_pred + &a_next * (beta * dt * dt)));
            v.set_column(k + 1, &(&v_pred + &a_next * (gamma * dt)));
            a.set_column(k + 1, &a_next);
        }
        Trajectory {
            grid: self.grid.clone(),
            x,
            v,
            a,
        }
    }

    /// Forward state solve with optional control.
    pub fn solve_forward(
        &self,
        sys: &SecondOrderSystem,
        u: Option<&ControlSignal>,
    ) -> Result<Trajectory> {
        assert_eq!(self.variant, Variant::Forward, "not a forward solver");
        let loads = match u {
            Some(u) => {
                sys.grid().check_same(u.grid(), "control vs system")?;
                if u.p() != sys.p() {
                    return Err(Error::DimensionMismatch(format!(
                        "control has {} channels, system expects {}",
                        u.p(),
                        sys.p()
                    )));
                }
                &sys.forcing + &sys.control_map * u.values()
            }
            None => sys.forcing.clone(),
        };
        Ok(self.march(&sys.x0, &sys.x1, Some(&loads)))
    }

    /// Adjoint solve from initial data `q(0) = phi0`, `q̇(0) = phi1`.
    pub fn solve_adjoint(&self, phi0: &DVector<f64>, phi1: &DVector<f64>) -> Trajectory {
        assert_eq!(
            self.variant,
            Variant::AdjointForward,
            "not an adjoint solver"
        );
        self.march(phi0, phi1, None)
    }

    /// Adjoint solve from terminal data `q(T)`, `q̇(T)`, returned on the
    /// original grid orientation.
    pub fn solve_retrograde(&self, q_t: &DVector<f64>, qdot_t: &DVector<f64>) -> Trajectory {
        assert_eq!(self.variant, Variant::Retrograde, "not a retrograde solver");
        let reversed = self.march(q_t, &(-qdot_t), None);
        let steps = self.grid.steps();
        let n = reversed.x.nrows();
        let mut x = DMatrix::zeros(n, steps + 1);
        let mut v = DMatrix::zeros(n, steps + 1);
        let mut a = DMatrix::zeros(n, steps + 1);
        for k in 0..=steps {
            x.set_column(k, &reversed.x.column(steps - k));
            v.set_column(k, &(-reversed.v.column(steps - k)));
            a.set_column(k, &reversed.a.column(steps - k));
        }
        Trajectory {
            grid: self.grid.clone(),
            x,
            v,
            a,
        }
    }
}

/// One-shot forward solve (factorizes internally; build a [`NewmarkSolver`]
/// to amortize the factorization over many solves).
pub fn newmark_forward(
    sys: &SecondOrderSystem,
    u: Option<&ControlSignal>,
    params: NewmarkParams,
) -> Result<Trajectory> {
    NewmarkSolver::forward(sys, params)?.solve_forward(sys, u)
}

/// One-shot adjoint solve from initial data.
pub fn newmark_adjoint_forward(
    sys: &SecondOrderSystem,
    phi0: &DVector<f64>,
    phi1: &DVector<f64>,
    params: NewmarkParams,
) -> Result<Trajectory> {
    if phi0.len() != sys.n() || phi1.len() != sys.n() {
        return Err(Error::DimensionMismatch(format!(
            "adjoint data of length {}/{}, expected {}",
            phi0.len(),
            phi1.len(),
            sys.n()
        )));
    }
    Ok(NewmarkSolver::adjoint(sys, params)?.solve_adjoint(phi0, phi1))
}

/// One-shot adjoint solve from terminal data.
pub fn newmark_retrograde(
    sys: &SecondOrderSystem,
    q_t: &DVector<f64>,
    qdot_t: &DVector<f64>,
    params: NewmarkParams,
) -> Result<Trajectory> {
    if q_t.len() != sys.n() || qdot_t.len() != sys.n() {
        return Err(Error::DimensionMismatch(format!(
            "terminal data of length {}/{}, expected {}",
            q_t.len(),
            qdot_t.len(),
            sys.n()
        )));
    }
    Ok(NewmarkSolver::retrograde(sys, params)?.solve_retrograde(q_t, qdot_t))
}

fn check_series(grid: &TimeGrid, f: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<()> {
    if f.nrows() != g.nrows() || f.ncols() != g.ncols() {
        return Err(Error::GridMismatch(format!(
            "series shapes {}x{} vs {}x{}",
            f.nrows(),
            f.ncols(),
            g.nrows(),
            g.ncols()
        )));
    }
    if f.ncols() != grid.steps() + 1 {
        return Err(Error::GridMismatch(format!(
            "series has {} nodes, grid has {}",
            f.ncols(),
            grid.steps() + 1
        )));
    }
    Ok(())
}

/// Trapezoidal-rule inner product of two nodal series (one column per node):
/// `Σ_k w_k (f_k, g_k)` with end weights halved.
pub fn trapezoid_inner(grid: &TimeGrid, f: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<f64> {
    check_series(grid, f, g)?;
    let steps = grid.steps();
    let mut acc = 0.5 * (f.column(0).dot(&g.column(0)) + f.column(steps).dot(&g.column(steps)));
    for k in 1..steps {
        acc += f.column(k).dot(&g.column(k));
    }
    Ok(acc * grid.dt())
}

/// Per-element product-of-averages quadrature
/// `Σ_e dt/4 · (f_e + f_{e+1}, g_e + g_{e+1})`.
///
/// Equivalently, midpoint quadrature of the piecewise-linear interpolants.
/// This is the pairing under which the trapezoidal-Newmark state/adjoint
/// duality identity holds to machine precision; the outer loop and the inner
/// problem load both use it so the discrete identities close exactly.
pub fn midpoint_inner(grid: &TimeGrid, f: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<f64> {
    check_series(grid, f, g)?;
    let mut acc = 0.0;
    for e in 0..grid.steps() {
        let fs = f.column(e) + f.column(e + 1);
        let gs = g.column(e) + g.column(e + 1);
        acc += fs.dot(&gs);
    }
    Ok(acc * grid.dt() * 0.25)
}
