//! The plain-text system file format: write the assembled boat model out,
//! read it back bit-exactly, and simulate from the file. This is the path
//! for systems whose matrices come from outside (measured or exported) —
//! anything that fits M Ẍ + C Ẋ + K X = F + B u.
//!
//!     cargo run --example system_file_io

use tvcontrol::dynamics::write_system_file;
use tvcontrol::integrator::newmark_forward;
use tvcontrol::models::{demo_defaults, load_system_file};
use tvcontrol::NewmarkParams;

fn main() -> tvcontrol::Result<()> {
    let boat = &demo_defaults().boat;
    let sys = boat.build(&boat.heave_impact)?;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("boat.sys");
    write_system_file(&sys, &path)?;

    let text = std::fs::read_to_string(&path)?;
    println!("--- {} (first lines) ---", path.display());
    for line in text.lines().take(8) {
        println!("{line}");
    }
    println!("--- ({} lines total) ---\n", text.lines().count());

    let back = load_system_file(&path)?;
    assert_eq!(sys.mass, back.mass);
    assert_eq!(sys.damping, back.damping);
    assert_eq!(sys.forcing, back.forcing);
    println!("round trip is bit-exact (shortest round-trip float formatting)");

    let traj = newmark_forward(&back, None, NewmarkParams::default())?;
    let xt = traj.terminal_position();
    println!(
        "simulated from file: z(T) = {:.5} m, θ(T) = {:.5} rad",
        xt[0], xt[1]
    );
    Ok(())
}
