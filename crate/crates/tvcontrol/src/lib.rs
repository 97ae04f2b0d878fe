//! Exact controls for linear second-order dynamical systems
//! `M Ẍ + C Ẋ + K X = F + B u`, with a total-variation term in the cost that
//! produces piecewise-flat control signals.
//!
//! The pipeline: simulate with an unconditionally stable Newmark scheme,
//! attach adjoint states, solve the non-smooth inner problem by projected
//! Uzawa duality, and drive the terminal state to rest with a preconditioned
//! monotone-operator iteration on the adjoint initial data.
//!
//! Start from the examples; each is a self-contained tour of one capability:
//!
//! - `simulate_two_mass` — free Newmark response of the spring demo
//! - `exact_control_two_mass` — full synthesis at one γ, plateau structure
//! - `gamma_sweep` — γ study: variation falls, plateaus grow, exactness holds
//! - `boat_flight_control` — hydrofoil impact rejection, two flaps
//! - `inner_duality` — the inner problem alone, saturation threshold included
//! - `controllability_check` — Kalman rank tests, one deliberately broken
//! - `system_file_io` — the plain-text system format, written and read back
//!
//! ```text
//! cargo run --release --example gamma_sweep
//! ```
//!
//! The same machinery drives the `tvcontrol` binary (`simulate`, `control`,
//! `gamma-study`, `check`) for batch runs configured over TOML; see
//! [`cli`].

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod inner;
pub mod integrator;
pub mod models;
pub mod outer;

pub use dynamics::{ControllabilityReport, SecondOrderSystem, TimeGrid};
pub use error::{Error, Result};
pub use inner::{ControlSignal, CostWeights, MultiplierField, UzawaOptions, UzawaSolution};
pub use integrator::{NewmarkParams, Trajectory};
pub use models::{demo_defaults, BoatParams, DemoDefaults, TrimState};
pub use outer::{solve_exact_control, OuterOptions, OuterReport, PhiVector};
