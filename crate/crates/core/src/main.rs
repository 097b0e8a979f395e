use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use conkin_core::runner::run_scenario;
use conkin_core::runner::scenario::{parse_scenario, RunKind};

#[derive(Parser)]
#[command(
    name = "conkin",
    version,
    about = "Batch runs of conformal and contact kinetic models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one particle trajectory.
    SimulateParticle(RunArgs),
    /// Step a phase-space density.
    SimulateKinetic(RunArgs),
    /// Step a one-form momentum density.
    SimulateMomentum(RunArgs),
    /// Run the seeded bracket and lift checks.
    VerifyAlgebra(RunArgs),
    /// Commuting-square residuals between the contact and conformal levels.
    HierarchyCheck(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; falls back to the scenario's `output` key.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

const SCHEMA: u8 = 3;
const ABORT: u8 = 4;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (expected, args) = match cli.command {
        Command::SimulateParticle(a) => (RunKind::Particle, a),
        Command::SimulateKinetic(a) => (RunKind::KineticDensity, a),
        Command::SimulateMomentum(a) => (RunKind::KineticMomentum, a),
        Command::VerifyAlgebra(a) => (RunKind::Verify, a),
        Command::HierarchyCheck(a) => (RunKind::Hierarchy, a),
    };
    if let Some(k) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build_global()
        {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(ABORT);
        }
    }
    let text = match std::fs::read_to_string(&args.scenario) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", args.scenario.display());
            return ExitCode::from(SCHEMA);
        }
    };
    let mut scenario = match parse_scenario(&text) {
        Ok(s) => s,
        Err(errors) => {
            eprintln!("{}: {errors}", args.scenario.display());
            return ExitCode::from(SCHEMA);
        }
    };
    if scenario.kind != expected {
        eprintln!(
            "error: scenario kind `{}` does not match this subcommand (expects `{}`)",
            scenario.kind.name(),
            expected.name()
        );
        return ExitCode::from(SCHEMA);
    }
    if let Some(seed) = args.seed {
        scenario.seed = seed;
        scenario.echo.insert("seed".into(), seed.to_string());
    }
    let Some(out) = args.out.or_else(|| scenario.output.clone()) else {
        eprintln!("error: no output directory (pass --out or set `output`)");
        return ExitCode::from(SCHEMA);
    };
    match run_scenario(&scenario, &out) {
        Ok(m) => {
            for name in m.failed_checks() {
                eprintln!("check failed: {name}");
            }
            if let Some(reason) = m.aborted() {
                eprintln!("aborted: {reason}");
            }
            ExitCode::from(m.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(ABORT)
        }
    }
}
