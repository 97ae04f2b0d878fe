//! Hydrofoil flight control: reject a heave impact and a pitch impact with
//! the two flaps, on the linearized heave/pitch model. The interesting part
//! is that this plant's damping matrix is sign-indefinite (the pitch-rate
//! derivative feeds energy in), and the synthesis does not care.
//!
//!     cargo run --release --example boat_flight_control

use tvcontrol::inner::tv_seminorm;
use tvcontrol::models::{demo_defaults, force_derivatives, trim_equilibrium};
use tvcontrol::outer::solve_exact_control;
use tvcontrol::OuterOptions;

fn main() -> tvcontrol::Result<()> {
    let boat = &demo_defaults().boat;
    let params = boat.params();

    let trim = trim_equilibrium(&params)?;
    let deg = 180.0 / std::f64::consts::PI;
    println!(
        "trim at V = {} m/s: α₀ = {:.3}° (front), β₀ = {:.3}° (rear)",
        params.speed,
        trim.alpha0 * deg,
        trim.beta0 * deg
    );
    let d = force_derivatives(&params, &trim);
    println!(
        "pitch-rate moment derivative ∂M_y/∂θ̇ = {:.1} (positive → negative damping)",
        d.my_thetadot
    );

    for name in ["heave_impact", "pitch_impact"] {
        let scenario = boat.scenario(name).unwrap();
        let sys = boat.build(scenario)?;
        let weights = boat.weights(10.0)?;
        let report = solve_exact_control(&sys, &weights, &OuterOptions::default())?;

        let u = &report.control;
        let mut max_r = 0.0f64;
        let mut max_f = 0.0f64;
        for k in 0..u.values().ncols() {
            max_r = max_r.max(u.values()[(0, k)].abs());
            max_f = max_f.max(u.values()[(1, k)].abs());
        }
        println!(
            "\n{name}: T = {} s, x0 = {:?}, v0 = {:?}",
            scenario.horizon, scenario.x0, scenario.v0
        );
        println!(
            "  terminal {:.3e} (E0 {:.3e}), outer {}, inner {}, converged: {}",
            report.terminal_norm,
            report.initial_energy,
            report.outer_iters,
            report.inner_iters_total,
            report.converged
        );
        println!(
            "  flap deflection peaks: rear {:.4}° front {:.4}°, TV(u) = {:.4}",
            max_r * deg,
            max_f * deg,
            tv_seminorm(u)
        );
    }
    Ok(())
}
