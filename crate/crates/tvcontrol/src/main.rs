use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tvcontrol::cli::{self, CliOverrides};
use tvcontrol::Error;

/// Exact control synthesis for second-order linear systems, with a
/// total-variation penalty that favors piecewise-constant actuation.
#[derive(Parser)]
#[command(name = "tvcontrol", version)]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config file and TVCONTROL_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for randomized diagnostics (the synthesis itself is deterministic).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Uncontrolled forward simulation → trajectory.csv
    Simulate,
    /// Exact-control synthesis over the configured γ list → CSVs + summary
    Control,
    /// γ sweep with plateau statistics (needs ≥ 3 γ values)
    GammaStudy,
    /// Controllability and trim report
    Check,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let Some(config_path) = args.config else {
        eprintln!("missing --config <path>");
        return ExitCode::from(2);
    };
    let overrides = CliOverrides {
        out: args.out,
        seed: args.seed,
        quiet: args.quiet,
    };
    let result = cli::load_config(&config_path).and_then(|cfg| match args.cmd {
        Cmd::Simulate => cli::run_simulate(&cfg, &overrides),
        Cmd::Control => cli::run_control(&cfg, &overrides),
        Cmd::GammaStudy => cli::run_gamma_study(&cfg, &overrides),
        Cmd::Check => cli::run_check(&cfg, &overrides),
    });
    match result {
        Ok(outcome) => {
            // `check` exists to be read; everything else only chats when asked.
            if matches!(args.cmd, Cmd::Check) {
                print!("{}", outcome.report);
            } else if !overrides.quiet {
                print!("{}", outcome.report);
            }
            if outcome.all_converged {
                ExitCode::SUCCESS
            } else {
                eprintln!("warning: at least one solve did not reach the terminal tolerance");
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Io(_) => 4,
                _ => 2,
            })
        }
    }
}
