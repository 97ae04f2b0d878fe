//! Free response of the demo spring chain: no control, just the Newmark
//! march. Prints a coarse trajectory table and the terminal state.
//!
//!     cargo run --example simulate_two_mass

use tvcontrol::integrator::newmark_forward;
use tvcontrol::models::demo_defaults;
use tvcontrol::NewmarkParams;

fn main() -> tvcontrol::Result<()> {
    let demo = &demo_defaults().two_mass;
    let sys = demo.build()?;
    let grid = sys.grid().clone();
    println!(
        "two-mass chain: k = ({}, {}), x0 = ({}, {}), T = {} s, {} steps",
        demo.k1, demo.k2, demo.x0[0], demo.x0[1], grid.horizon(), grid.steps()
    );

    let traj = newmark_forward(&sys, None, NewmarkParams::default())?;

    println!("\n      t      x_1        x_2");
    for k in (0..=grid.steps()).step_by(grid.steps() / 13) {
        println!(
            "{:7.3}  {:9.5}  {:9.5}",
            grid.node(k),
            traj.x[(0, k)],
            traj.x[(1, k)]
        );
    }

    let xt = traj.terminal_position();
    let vt = traj.terminal_velocity();
    println!("\nterminal position: ({:.5}, {:.5})", xt[0], xt[1]);
    println!("terminal velocity: ({:.5}, {:.5})", vt[0], vt[1]);
    println!(
        "terminal norm |X(T)|² + |Ẋ(T)|²: {:.5} (initial energy {})",
        xt.norm_squared() + vt.norm_squared(),
        sys.initial_energy()
    );
    println!("an uncontrolled conservative chain keeps ringing — nothing decays here");
    Ok(())
}
