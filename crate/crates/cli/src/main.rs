//! `lorentz-bg`: command-line front end for the periodic Lorentz gas tools.
//!
//! Exit status is 0 on success, 1 when a check fails or a computation
//! errors, 2 on bad usage.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod geometry;
mod kernel;
mod mc;
mod out;
mod plot;
mod solve;
mod verify;

use out::{CliError, Dest};

#[derive(Parser, Debug)]
#[command(
    name = "lorentz-bg",
    version,
    about = "Periodic Lorentz gas in the Boltzmann-Grad limit"
)]
struct Cli {
    /// Worker threads for parallel loops. Results do not depend on it.
    #[arg(long, global = true, env = "LORENTZ_BG_THREADS")]
    threads: Option<usize>,
    /// Directory for output files. Single tables go to stdout without it.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact billiard among disks of radius r centered on Z².
    #[command(subcommand)]
    Billiard(geometry::BilliardCmd),
    /// Continued fractions and three-obstacle parameters.
    #[command(subcommand)]
    Cf(geometry::CfCmd),
    /// Limit transition kernel and equilibrium profile.
    #[command(subcommand)]
    Kernel(kernel::KernelCmd),
    /// Cesàro estimators and particle simulations.
    #[command(subcommand)]
    Mc(mc::McCmd),
    /// Run the kinetic solver from a JSON config.
    Solve(solve::SolveArgs),
    /// Acceptance checks.
    #[command(subcommand)]
    Verify(verify::VerifyCmd),
    /// Reshape a CSV table into long format (id columns, variable, value).
    PlotData(plot::PlotArgs),
}

fn run(cli: Cli) -> out::Result<()> {
    if let Some(n) = cli.threads {
        out::check("--threads", n, n >= 1, "[1, ∞)")?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(out::run_err)?;
    }
    let dest = Dest {
        dir: cli.output_dir,
    };
    match cli.command {
        Command::Billiard(c) => geometry::billiard(c, &dest),
        Command::Cf(c) => geometry::cf(c, &dest),
        Command::Kernel(c) => kernel::run(c, &dest),
        Command::Mc(c) => mc::run(c, &dest),
        Command::Solve(a) => solve::run(a, &dest),
        Command::Verify(c) => verify::run(c, &dest),
        Command::PlotData(a) => plot::run(a, &dest),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Help and version print to stdout and exit 0; usage errors exit 2.
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Usage(_) => {
                    eprintln!("error: {e}\n\nFor more information, try '--help'.")
                }
                _ => eprintln!("error: {e}"),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
