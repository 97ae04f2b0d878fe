//! Drives the compiled binary end to end: the numbers in the CSVs it writes
//! must replay, through the library, to exactly the numbers it reported.

use std::path::{Path, PathBuf};
use std::process::Command;

use nalgebra::{DMatrix, DVector};

use tvcontrol::dynamics::write_system_file;
use tvcontrol::inner::{tv_seminorm, ControlSignal, CostWeights};
use tvcontrol::integrator::{newmark_forward, NewmarkParams};
use tvcontrol::models::two_mass_spring;
use tvcontrol::{SecondOrderSystem, TimeGrid};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tvcontrol"))
}

/// An asymmetric, lightly damped spring pair — nothing the demo defaults
/// would mask a bug with.
fn test_system(grid: TimeGrid) -> SecondOrderSystem {
    two_mass_spring(
        1.0,
        2.0,
        40.0,
        30.0,
        0.5,
        0.0,
        1,
        DVector::from_column_slice(&[0.8, -0.3]),
        DVector::from_column_slice(&[0.2, 0.1]),
        grid,
    )
    .unwrap()
}

fn parse_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines
        .next()
        .unwrap()
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + b.abs())
}

#[test]
fn written_artifacts_replay_to_the_reported_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let grid = TimeGrid::new(1.5, 150).unwrap();
    let sys = test_system(grid.clone());
    let sys_path = dir.path().join("sys.txt");
    write_system_file(&sys, &sys_path).unwrap();

    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        format!(
            "[model]\nkind = \"file\"\npath = {:?}\n\
             [weights]\nalpha = 1.0\nbeta = 2.0\ngamma_list = [0.0, 8.0]\n",
            sys_path
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args(["control", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .arg("--quiet")
        .status()
        .unwrap();
    assert!(status.success());

    let (header, rows) = parse_csv(&out.join("summary.csv"));
    assert_eq!(
        header,
        ["gamma", "terminal_norm", "tv", "l2_cost", "outer_iters", "inner_iters", "converged"]
    );
    assert_eq!(rows.len(), 2);

    for row in &rows {
        let gamma = row[0];
        assert_eq!(row[6], 1.0, "γ={gamma} row reports non-convergence");

        // Rebuild the control from its CSV and push it back through the
        // integrator; Display round-trips f64 exactly, so the replay must
        // reproduce the summary bit for bit (modulo the parse).
        let (uh, urows) = parse_csv(&out.join(format!("control_g{gamma}.csv")));
        assert_eq!(uh, ["t", "u_1"]);
        assert_eq!(urows.len(), grid.steps() + 1);
        let values = DMatrix::from_fn(1, grid.steps() + 1, |_, k| urows[k][1]);
        let u = ControlSignal::new(grid.clone(), values).unwrap();

        let traj = newmark_forward(&sys, Some(&u), NewmarkParams::default()).unwrap();
        let terminal =
            traj.terminal_position().norm_squared() + traj.terminal_velocity().norm_squared();
        assert!(
            close(terminal, row[1]),
            "γ={gamma}: replayed terminal {terminal:.17e} vs reported {:.17e}",
            row[1]
        );
        assert!(close(tv_seminorm(&u), row[2]), "γ={gamma}: tv mismatch");
        let weights = CostWeights::new(1.0, 2.0, gamma).unwrap();
        let l2 = weights.alpha() * u.l2_norm_sq() + weights.beta() * u.slope_l2_norm_sq();
        assert!(close(l2, row[3]), "γ={gamma}: quadratic cost mismatch");

        // The trajectory CSV's final row is the state the summary scored.
        let (th, trows) = parse_csv(&out.join(format!("trajectory_g{gamma}.csv")));
        assert_eq!(th, ["t", "x_1", "x_2", "v_1", "v_2"]);
        let last = trows.last().unwrap();
        for i in 0..2 {
            assert!(close(last[1 + i], traj.terminal_position()[i]));
            assert!(close(last[3 + i], traj.terminal_velocity()[i]));
        }
    }

    // Every converged γ earned a certificate row.
    let (ch, crows) = parse_csv(&out.join("certificate.csv"));
    assert_eq!(ch, ["gamma", "probe_excess"]);
    assert_eq!(crows.len(), 2);
}

#[test]
fn uncontrolled_simulation_matches_the_library_integrator() {
    let dir = tempfile::tempdir().unwrap();
    let grid = TimeGrid::new(0.9, 90).unwrap();
    let sys = test_system(grid.clone());
    let sys_path = dir.path().join("sys.txt");
    write_system_file(&sys, &sys_path).unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        format!("[model]\nkind = \"file\"\npath = {:?}\n", sys_path),
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args(["simulate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .arg("--quiet")
        .status()
        .unwrap();
    assert!(status.success());

    let traj = newmark_forward(&sys, None, NewmarkParams::default()).unwrap();
    let (header, rows) = parse_csv(&out.join("trajectory.csv"));
    assert_eq!(header, ["t", "x_1", "x_2", "v_1", "v_2"]);
    assert_eq!(rows.len(), grid.steps() + 1);
    for (k, row) in rows.iter().enumerate() {
        assert!(close(row[0], grid.node(k)));
        for i in 0..2 {
            assert!(close(row[1 + i], traj.x[(i, k)]), "x_{i} diverges at row {k}");
            assert!(close(row[3 + i], traj.v[(i, k)]), "v_{i} diverges at row {k}");
        }
    }
}

#[test]
fn check_verb_reports_controllability_and_trim() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "[model]\nkind = \"boat\"\n").unwrap();
    let output = bin()
        .args(["check", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    assert!(text.contains("rank"), "no controllability rank in: {text}");
    assert!(text.contains("trim"), "no trim line in: {text}");
}

#[test]
fn exit_codes_separate_config_solver_and_io_failures() {
    let dir = tempfile::tempdir().unwrap();
    let write_cfg = |name: &str, body: &str| -> PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    };
    let code = |args: &[&str], config: &Path| -> i32 {
        bin()
            .args(args)
            .arg("--config")
            .arg(config)
            .arg("--out")
            .arg(dir.path().join("scratch"))
            .arg("--quiet")
            .status()
            .unwrap()
            .code()
            .unwrap()
    };

    // Config mistakes → 2.
    let unknown = write_cfg("unknown.toml", "[model]\nkind = \"two_mass\"\nbogus = 1\n");
    assert_eq!(code(&["simulate"], &unknown), 2);
    let two_gammas = write_cfg(
        "short.toml",
        "[model]\nkind = \"two_mass\"\n[grid]\nhorizon = 1.3\nsteps = 130\n\
         [weights]\ngamma_list = [0.0, 1.0]\n",
    );
    assert_eq!(code(&["gamma-study"], &two_gammas), 2);

    // A solve cut off before it can converge → 3.
    let starved = write_cfg(
        "starved.toml",
        "[model]\nkind = \"two_mass\"\n[weights]\ngamma = 1000.0\n\
         [solver]\nmax_outer = 1\n",
    );
    assert_eq!(code(&["control"], &starved), 3);

    // Unreadable inputs → 4.
    assert_eq!(code(&["simulate"], &dir.path().join("missing.toml")), 4);
    let ghost = write_cfg(
        "ghost.toml",
        "[model]\nkind = \"file\"\npath = \"/nonexistent/sys.txt\"\n",
    );
    assert_eq!(code(&["simulate"], &ghost), 4);

    // Missing --config entirely → 2.
    let status = bin().arg("control").status().unwrap();
    assert_eq!(status.code().unwrap(), 2);
}
