mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use penmix::government::WeightingMode;
use penmix::Error;

use output::Sink;

/// Lifecycle pension mix solver: PAYGO, EET and private savings.
#[derive(Parser)]
#[command(name = "penmix", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Io {
    /// Scenario JSON file.
    scenario: PathBuf,
    /// Directory for the CSV/JSON outputs (created if missing).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Weighting {
    Population,
    Equal,
}

#[derive(Subcommand)]
enum Command {
    /// Check the standing assumptions and print the derived constants.
    Validate(Io),
    /// Critical ages and the flowchart case.
    CriticalAges(Io),
    /// Per-age preference ordering of the three vehicles.
    Classify {
        #[command(flatten)]
        io: Io,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        step: f64,
    },
    /// Welfare-maximizing PAYGO and EET rates.
    Optimize {
        #[command(flatten)]
        io: Io,
        #[arg(long, value_enum)]
        weighting: Weighting,
        /// Cohorts choose their own EET rate.
        #[arg(long)]
        voluntary: bool,
    },
    /// Expected optimal paths of the cohort aged `zeta` at t0.
    Paths {
        #[command(flatten)]
        io: Io,
        #[arg(long, allow_negative_numbers = true)]
        zeta: f64,
        #[arg(long, allow_negative_numbers = true)]
        theta: f64,
        #[arg(long, allow_negative_numbers = true)]
        k: f64,
        #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
        step: f64,
    },
    /// Two-parameter grid of a critical age or optimal rate.
    Sweep {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        spec: PathBuf,
    },
    /// Monte Carlo check of the closed-form value function.
    Verify {
        #[command(flatten)]
        io: Io,
        #[arg(long, default_value_t = 20_000)]
        paths: usize,
        #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
        dt: f64,
        #[arg(long, default_value_t = 20_240_601)]
        seed: u64,
        /// Ages at t0 of the simulated cohorts.
        #[arg(long, value_delimiter = ',', default_value = "20,30,50")]
        ages: Vec<f64>,
    },
    /// Entrants, support ratio and critical ages under a baby boom.
    Babyboom {
        #[command(flatten)]
        io: Io,
        #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
        step: f64,
    },
}

const USAGE: u8 = 2;
const INFEASIBLE: u8 = 3;
const INVALID: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => USAGE,
        Error::EmptyRegion(_) | Error::InsolventCohort { .. } => INFEASIBLE,
        _ => INVALID,
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("PENMIX_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| format!("PENMIX_THREADS must be a non-negative integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<bool, Error> {
    let io = match &cli.command {
        Command::Validate(io) | Command::CriticalAges(io) => io,
        Command::Classify { io, .. }
        | Command::Optimize { io, .. }
        | Command::Paths { io, .. }
        | Command::Sweep { io, .. }
        | Command::Verify { io, .. }
        | Command::Babyboom { io, .. } => io,
    };
    let mut sink = Sink::new(io.out.as_deref())?;
    let path = io.scenario.as_path();
    let ok = match &cli.command {
        Command::Validate(_) => commands::validate(path, &mut sink).map(|_| true),
        Command::CriticalAges(_) => commands::critical_ages(path, &mut sink).map(|_| true),
        Command::Classify { step, .. } => commands::classify(path, *step, &mut sink).map(|_| true),
        Command::Optimize { weighting, voluntary, .. } => {
            let mode = match weighting {
                Weighting::Population => WeightingMode::Population,
                Weighting::Equal => WeightingMode::Equal,
            };
            commands::optimize(path, mode, *voluntary, &mut sink).map(|_| true)
        }
        Command::Paths { zeta, theta, k, step, .. } => commands::paths(path, *zeta, *theta, *k, *step, &mut sink).map(|_| true),
        Command::Sweep { spec, .. } => commands::sweep(path, spec, &mut sink).map(|_| true),
        Command::Verify { paths, dt, seed, ages, .. } => commands::verify(path, ages, *paths, *dt, *seed, &mut sink),
        Command::Babyboom { step, .. } => commands::babyboom(path, *step, &mut sink).map(|_| true),
    };
    // Partial outputs are still listed when a command fails late.
    for p in &sink.written {
        println!("wrote {}", p.display());
    }
    ok
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { 0 });
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(USAGE);
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        // A verification row failed.
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
