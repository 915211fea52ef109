use clap::{Parser, Subcommand};
use foliab_cli::scenario::Command;
use foliab_cli::Overrides;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "foliab", version, about = "Verification suites for the geometry of Riemannian foliations")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory for the JSON report and CSV tables.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Multiplies every tolerance.
    #[arg(long = "tol-scale")]
    tol_scale: Option<f64>,
}

#[derive(Subcommand)]
enum Sub {
    /// O'Neill tensors, adapted torsion and curvature-difference identities.
    Identities(RunArgs),
    /// Adapted Jacobi fields along leafwise geodesics.
    Jacobi(RunArgs),
    /// Normal foliation chart identities.
    NormalChart(RunArgs),
    /// Bounded-geometry audit.
    Audit(RunArgs),
    /// Cover by normal chart neighbourhoods and partition of unity.
    Partition(RunArgs),
    /// Lists the built-in fixtures.
    ListFixtures,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Sub::ListFixtures => {
            print!("{}", foliab_cli::fixture_listing());
            return ExitCode::SUCCESS;
        }
        Sub::Identities(a) => (Command::Identities, a),
        Sub::Jacobi(a) => (Command::Jacobi, a),
        Sub::NormalChart(a) => (Command::NormalChart, a),
        Sub::Audit(a) => (Command::Audit, a),
        Sub::Partition(a) => (Command::Partition, a),
    };
    let ov = Overrides { seed: args.seed, tol_scale: args.tol_scale };
    let code = foliab_cli::run(command, &args.scenario, args.out.as_deref(), &ov);
    ExitCode::from(code as u8)
}
