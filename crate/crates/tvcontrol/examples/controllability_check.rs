//! Kalman rank checks on the shipped models, plus a deliberately broken
//! chain (k2 = 0 with the force on mass 1) whose second mass is unreachable.
//!
//!     cargo run --example controllability_check

use nalgebra::DVector;
use tvcontrol::models::{demo_defaults, two_mass_spring};
use tvcontrol::TimeGrid;

fn main() -> tvcontrol::Result<()> {
    let d = demo_defaults();

    let spring = d.two_mass.build()?;
    let r = spring.controllability_rank();
    println!(
        "two_mass:        rank {} of {} → {}",
        r.numeric_rank,
        r.dim,
        verdict(r.controllable)
    );

    let boat = d.boat.build(&d.boat.heave_impact)?;
    let r = boat.controllability_rank();
    println!(
        "boat:            rank {} of {} → {}",
        r.numeric_rank,
        r.dim,
        verdict(r.controllable)
    );

    // Cut the coupling spring: mass 2 floats free, the force on mass 1
    // cannot reach it, and the rank drops to the controllable half.
    let cut = two_mass_spring(
        1.0,
        1.0,
        60.0,
        0.0,
        0.0,
        0.0,
        0,
        DVector::from_column_slice(&[1.0, 0.5]),
        DVector::zeros(2),
        TimeGrid::new(2.6, 520)?,
    )?;
    let r = cut.controllability_rank();
    println!(
        "decoupled chain: rank {} of {} → {}",
        r.numeric_rank,
        r.dim,
        verdict(r.controllable)
    );
    Ok(())
}

fn verdict(controllable: bool) -> &'static str {
    if controllable {
        "controllable"
    } else {
        "NOT controllable"
    }
}
