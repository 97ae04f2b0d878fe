//! Sweep the total-variation weight γ on the spring benchmark and watch the
//! control go from smooth (γ = 0, plain H¹ minimizer) to staircase-flat:
//! total variation falls, plateaus grow, exactness never degrades.
//!
//!     cargo run --release --example gamma_sweep

use tvcontrol::cli::plateau_fraction;
use tvcontrol::inner::tv_seminorm;
use tvcontrol::models::demo_defaults;
use tvcontrol::outer::solve_exact_control;
use tvcontrol::OuterOptions;

fn main() -> tvcontrol::Result<()> {
    let demo = &demo_defaults().two_mass;
    let sys = demo.build()?;

    println!("    γ    terminal/E0        TV    plateau%   outer  inner");
    for &gamma in &demo.gamma_list {
        let weights = demo.weights(gamma)?;
        let report = solve_exact_control(&sys, &weights, &OuterOptions::default())?;
        let u = &report.control;
        println!(
            "{:6}    {:.3e}    {:8.3}    {:6.2}    {:4}  {:6}",
            gamma,
            report.terminal_norm / report.initial_energy,
            tv_seminorm(u),
            100.0 * plateau_fraction(u),
            report.outer_iters,
            report.inner_iters_total
        );
    }
    println!("\npast a threshold, pushing γ higher mostly buys flatter plateaus,");
    println!("not smaller total variation — the exactness constraint sets a floor");
    Ok(())
}
