use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rbsde_cli::battery::run_battery;
use rbsde_cli::commands::{
    cmd_certify, cmd_compare, cmd_estimate, cmd_extremal, cmd_penalize, cmd_solve, Options,
};
use rbsde_cli::report::{render_csv, Report};
use rbsde_cli::scenario_file::{parse_norms, Scenario, ScenarioFile};
use rbsde_cli::{CliError, CliResult};

/// Reflected BSDE laboratory on binary random-walk trees.
#[derive(Debug, Parser)]
#[command(name = "rbsde", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Write CSV here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override report tolerances.
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Norm exponents, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    p: Option<Vec<f64>>,

    /// Seed of the certification sampler.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one scenario (projection when a barrier is present).
    Solve { file: PathBuf },
    /// Penalization sweep against the reflected solution.
    Penalize { file: PathBuf },
    /// Comparison of two ordered scenarios.
    Compare { first: PathBuf, second: PathBuf },
    /// Minimal and maximal solutions through convolution schedules.
    Extremal { file: PathBuf },
    /// A priori estimate diagnostics.
    Estimate { file: PathBuf },
    /// Sampled certification of the declared hypotheses.
    Certify { file: PathBuf },
    /// The full acceptance battery.
    Battery,
}

fn load(path: &Path) -> CliResult<Scenario> {
    ScenarioFile::load(path)?.build(path)
}

fn run(cli: &Cli) -> CliResult<Report> {
    let p = match &cli.p {
        Some(ps) => Some(parse_norms(ps).map_err(|m| CliError::input("<command line>", "flags", "p", m))?),
        None => None,
    };
    if let Some(t) = cli.tol {
        if !(t.is_finite() && t >= 0.0) {
            return Err(CliError::input("<command line>", "flags", "tol", "must be finite and nonnegative"));
        }
    }
    let opts = Options {
        tol: cli.tol,
        p,
        seed: cli.seed,
    };
    match &cli.command {
        Command::Solve { file } => cmd_solve(&load(file)?, &opts),
        Command::Penalize { file } => cmd_penalize(&load(file)?, &opts),
        Command::Compare { first, second } => cmd_compare(&load(first)?, &load(second)?, &opts),
        Command::Extremal { file } => cmd_extremal(&load(file)?, &opts),
        Command::Estimate { file } => cmd_estimate(&load(file)?, &opts),
        Command::Certify { file } => cmd_certify(&load(file)?, &opts),
        Command::Battery => Ok(run_battery()?.report),
    }
}

fn emit(cli: &Cli, csv: &str) -> CliResult<()> {
    match &cli.out {
        Some(path) => std::fs::write(path, csv).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        }),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    if let CliError::Property { row: Some(row), .. } = e {
        eprintln!("{}", row.to_csv_line());
    }
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            return fail(&CliError::input("<command line>", "flags", "threads", "must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("global pool is configured once");
    }
    let report = match run(&cli) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let outcome = render_csv(report.rows()).and_then(|csv| emit(&cli, &csv));
    if let Err(e) = outcome {
        return fail(&e);
    }
    match report.verdict() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
