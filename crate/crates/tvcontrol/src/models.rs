//! Concrete systems to feed the solver: a hydrofoil boat linearized about
//! level flight, a two-mass spring chain, plain-text system files, and the
//! pinned parameter sets used by the shipped demos.

use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::dynamics::{self, SecondOrderSystem, TimeGrid};
use crate::error::{Error, Result};
use crate::inner::CostWeights;

/// Lift slope of the symmetric foil section in its linear range,
/// c_l(ζ) = (18/π)·ζ for ζ in radians — i.e. 0.1 per degree.
pub const LIFT_SLOPE: f64 = 18.0 / std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoilCoeffs {
    pub lift: f64,
    pub drag: f64,
}

/// Lift and drag coefficients of a NACA0012 section at incidence `zeta`
/// (radians), linearized over the pre-stall range; drag is 1% of lift there.
pub fn naca0012_coeffs(zeta: f64) -> FoilCoeffs {
    let lift = LIFT_SLOPE * zeta;
    FoilCoeffs { lift, drag: 0.01 * lift }
}

/// Geometry and operating point of a two-foil hydrofoil boat.
///
/// Offsets are measured from the center of mass G: `d_f` / `d_r` are the
/// longitudinal distances of the front (main) and rear foil, `h_f` / `h_r`
/// their depths below G. Forward speed is held constant — surge is not part
/// of the model.
#[derive(Debug, Clone, Copy)]
pub struct BoatParams {
    pub mass: f64,
    pub pitch_inertia: f64,
    pub speed: f64,
    pub water_density: f64,
    pub gravity: f64,
    /// Wetted area of the front (main) foil.
    pub s_f: f64,
    /// Wetted area of the rear foil.
    pub s_r: f64,
    pub d_f: f64,
    pub d_r: f64,
    pub h_f: f64,
    pub h_r: f64,
}

impl BoatParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mass", self.mass),
            ("pitch_inertia", self.pitch_inertia),
            ("speed", self.speed),
            ("water_density", self.water_density),
            ("gravity", self.gravity),
            ("s_f", self.s_f),
            ("s_r", self.s_r),
            ("d_f", self.d_f),
            ("d_r", self.d_r),
            ("h_f", self.h_f),
            ("h_r", self.h_r),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "boat parameter {name} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Static incidences (radians) of the front and rear foil in level flight.
#[derive(Debug, Clone, Copy)]
pub struct TrimState {
    pub alpha0: f64,
    pub beta0: f64,
}

/// Level-flight trim: incidences α₀ (front) and β₀ (rear) such that lift
/// carries the weight and the pitching moment about G vanishes,
///
///   ρ/2 · V² · [S_r c_l(β₀) + S_f c_l(α₀)] = M g,
///   S_f d_f c_l(α₀) = S_r d_r c_l(β₀).
///
/// With the linear lift law this 2×2 system has a closed-form solution.
pub fn trim_equilibrium(p: &BoatParams) -> Result<TrimState> {
    p.validate()?;
    let weight = p.mass * p.gravity;
    let alpha0 = std::f64::consts::PI * weight * p.d_r
        / (9.0 * p.water_density * (p.speed * p.speed) * p.s_f * (p.d_r + p.d_f));
    let beta0 = std::f64::consts::PI * weight * p.d_f
        / (9.0 * p.water_density * (p.speed * p.speed) * p.s_r * (p.d_r + p.d_f));
    Ok(TrimState { alpha0, beta0 })
}

/// First derivatives of the heave force F_z and pitching moment M_y at trim,
/// with respect to (z, ż, θ, θ̇, δ_r, δ_f). δ_r and δ_f are the flap
/// deflections of the rear and front foil around their trim setting.
#[derive(Debug, Clone, Copy)]
pub struct ForceDerivatives {
    pub fz_z: f64,
    pub fz_zdot: f64,
    pub fz_theta: f64,
    pub fz_thetadot: f64,
    pub fz_delta_r: f64,
    pub fz_delta_f: f64,
    pub my_z: f64,
    pub my_zdot: f64,
    pub my_theta: f64,
    pub my_thetadot: f64,
    pub my_delta_r: f64,
    pub my_delta_f: f64,
}

/// Analytic linearization of the foil forces about level flight.
///
/// Rates enter through two mechanisms: a transverse velocity tilts each
/// foil's apparent incidence by ≈ (transverse speed)/V, and a pitch rate
/// also changes the apparent speed itself, because the foils ride `h` below
/// G and get swept forward when the boat pitches.
pub fn force_derivatives(p: &BoatParams, trim: &TrimState) -> ForceDerivatives {
    let s = LIFT_SLOPE;
    let q = 0.5 * p.water_density * p.speed * p.speed;
    let rv = p.water_density * p.speed;
    let cz_r = s * trim.beta0;
    let cz_f = s * trim.alpha0;
    ForceDerivatives {
        // The forces do not depend on ride height in this flight regime.
        fz_z: 0.0,
        my_z: 0.0,
        // ∂(incidence)/∂ż = −1/V on both foils.
        fz_zdot: -0.5 * rv * s * (p.s_r + p.s_f),
        my_zdot: 0.5 * rv * s * (p.s_r * p.d_r - p.s_f * p.d_f),
        fz_theta: q * s * (p.s_r + p.s_f),
        my_theta: q * s * (p.s_f * p.d_f - p.s_r * p.d_r),
        // ∂(incidence)/∂θ̇ = +d_r/V aft, −d_f/V forward; the apparent-speed
        // change adds 2·h·V per foil, weighted by the trim lift.
        fz_thetadot: rv
            * (p.s_r * p.h_r * cz_r
                + p.s_f * p.h_f * cz_f
                + 0.5 * s * (p.s_r * p.d_r - p.s_f * p.d_f)),
        my_thetadot: rv
            * (p.s_f * p.d_f * p.h_f * cz_f
                - p.s_r * p.d_r * p.h_r * cz_r
                - 0.5 * s * (p.s_r * p.d_r * p.d_r + p.s_f * p.d_f * p.d_f)),
        fz_delta_r: q * p.s_r * s,
        fz_delta_f: q * p.s_f * s,
        my_delta_r: -q * p.s_r * p.d_r * s,
        my_delta_f: q * p.s_f * p.d_f * s,
    }
}

/// Linearized heave/pitch dynamics about level flight. State X = (z, θ),
/// control u = (δ_r, δ_f).
///
/// Damping and stiffness are the negated force derivatives, so C comes out
/// sign-indefinite for rigs whose pitch-rate force derivative is positive
/// (deep main foil, shallow rudder foil), and K has an empty first column
/// because ride height generates no restoring force here.
pub fn assemble_boat_system(
    p: &BoatParams,
    forcing: DMatrix<f64>,
    x0: DVector<f64>,
    x1: DVector<f64>,
    grid: TimeGrid,
) -> Result<SecondOrderSystem> {
    let trim = trim_equilibrium(p)?;
    let d = force_derivatives(p, &trim);
    let mass =
        DMatrix::from_diagonal(&DVector::from_column_slice(&[p.mass, p.pitch_inertia]));
    #[rustfmt::skip]
    let damping = DMatrix::from_row_slice(2, 2, &[
        -d.fz_zdot, -d.fz_thetadot,
        -d.my_zdot, -d.my_thetadot,
    ]);
    #[rustfmt::skip]
    let stiffness = DMatrix::from_row_slice(2, 2, &[
        0.0, -d.fz_theta,
        0.0, -d.my_theta,
    ]);
    #[rustfmt::skip]
    let control_map = DMatrix::from_row_slice(2, 2, &[
        d.fz_delta_r, d.fz_delta_f,
        d.my_delta_r, d.my_delta_f,
    ]);
    SecondOrderSystem::new(mass, damping, stiffness, control_map, forcing, x0, x1, grid)
}

/// Two masses in a chain — wall —k1— m1 —k2— m2 — with matching dashpots
/// c1, c2 and a unit point force on mass `control_on` (0-based).
pub fn two_mass_spring(
    m1: f64,
    m2: f64,
    k1: f64,
    k2: f64,
    c1: f64,
    c2: f64,
    control_on: usize,
    x0: DVector<f64>,
    x1: DVector<f64>,
    grid: TimeGrid,
) -> Result<SecondOrderSystem> {
    for (name, v) in [("m1", m1), ("m2", m2)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mass {name} must be finite and positive, got {v}"
            )));
        }
    }
    for (name, v) in [("k1", k1), ("k2", k2), ("c1", c1), ("c2", c2)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "coefficient {name} must be finite and nonnegative, got {v}"
            )));
        }
    }
    if control_on > 1 {
        return Err(Error::InvalidParameter(format!(
            "control_on must be 0 or 1, got {control_on}"
        )));
    }
    let mass = DMatrix::from_diagonal(&DVector::from_column_slice(&[m1, m2]));
    #[rustfmt::skip]
    let damping = DMatrix::from_row_slice(2, 2, &[
        c1 + c2, -c2,
        -c2,      c2,
    ]);
    #[rustfmt::skip]
    let stiffness = DMatrix::from_row_slice(2, 2, &[
        k1 + k2, -k2,
        -k2,      k2,
    ]);
    let mut control_map = DMatrix::zeros(2, 1);
    control_map[(control_on, 0)] = 1.0;
    let forcing = DMatrix::zeros(2, grid.steps() + 1);
    SecondOrderSystem::new(mass, damping, stiffness, control_map, forcing, x0, x1, grid)
}

/// Reads a system from the plain-text matrix format; see
/// [`dynamics::read_system_file`] for the layout.
pub fn load_system_file(path: &Path) -> Result<SecondOrderSystem> {
    dynamics::read_system_file(path)
}

/// Pinned parameter sets for the shipped demos, parsed once from
/// `data/demo_defaults.toml`. The file ships inside the crate so golden
/// outputs stay stable across checkouts.
#[derive(Debug, Clone, Deserialize)]
pub struct DemoDefaults {
    pub two_mass: TwoMassDemo,
    pub boat: BoatDemo,
}

#[derive(Debug, Clone, Deserialize)]
pub struct TwoMassDemo {
    pub m1: f64,
    pub m2: f64,
    pub k1: f64,
    pub k2: f64,
    pub c1: f64,
    pub c2: f64,
    pub control_on: usize,
    pub horizon: f64,
    pub steps: usize,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma_list: Vec<f64>,
}

impl TwoMassDemo {
    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.steps)
    }

    pub fn build(&self) -> Result<SecondOrderSystem> {
        two_mass_spring(
            self.m1,
            self.m2,
            self.k1,
            self.k2,
            self.c1,
            self.c2,
            self.control_on,
            DVector::from_column_slice(&self.x0),
            DVector::from_column_slice(&self.v0),
            self.grid()?,
        )
    }

    pub fn weights(&self, gamma: f64) -> Result<CostWeights> {
        CostWeights::new(self.alpha, self.beta, gamma)
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct BoatDemo {
    pub mass: f64,
    pub pitch_inertia: f64,
    pub speed: f64,
    pub water_density: f64,
    pub gravity: f64,
    pub s_f: f64,
    pub s_r: f64,
    pub d_f: f64,
    pub d_r: f64,
    pub h_f: f64,
    pub h_r: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma_list: Vec<f64>,
    pub heave_impact: ImpactScenario,
    pub pitch_impact: ImpactScenario,
}

/// Initial data and horizon for one disturbance-rejection run.
#[derive(Debug, Clone, Deserialize)]
pub struct ImpactScenario {
    pub horizon: f64,
    pub steps: usize,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
}

impl BoatDemo {
    pub fn params(&self) -> BoatParams {
        BoatParams {
            mass: self.mass,
            pitch_inertia: self.pitch_inertia,
            speed: self.speed,
            water_density: self.water_density,
            gravity: self.gravity,
            s_f: self.s_f,
            s_r: self.s_r,
            d_f: self.d_f,
            d_r: self.d_r,
            h_f: self.h_f,
            h_r: self.h_r,
        }
    }

    pub fn scenario(&self, name: &str) -> Option<&ImpactScenario> {
        match name {
            "heave_impact" => Some(&self.heave_impact),
            "pitch_impact" => Some(&self.pitch_impact),
            _ => None,
        }
    }

    pub fn build(&self, scenario: &ImpactScenario) -> Result<SecondOrderSystem> {
        let grid = TimeGrid::new(scenario.horizon, scenario.steps)?;
        let forcing = DMatrix::zeros(2, grid.steps() + 1);
        assemble_boat_system(
            &self.params(),
            forcing,
            DVector::from_column_slice(&scenario.x0),
            DVector::from_column_slice(&scenario.v0),
            grid,
        )
    }

    pub fn weights(&self, gamma: f64) -> Result<CostWeights> {
        CostWeights::new(self.alpha, self.beta, gamma)
    }
}

static DEMO_DEFAULTS: OnceLock<DemoDefaults> = OnceLock::new();

/// The parsed contents of `data/demo_defaults.toml`.
pub fn demo_defaults() -> &'static DemoDefaults {
    DEMO_DEFAULTS.get_or_init(|| {
        toml::from_str(include_str!("../data/demo_defaults.toml"))
            .expect("embedded demo defaults must parse")
    })
}
