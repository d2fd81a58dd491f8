use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dissipeuler_cli::report::report_render;
use dissipeuler_cli::{run, with_threads, CliError, Experiment};

#[derive(Parser)]
#[command(
    name = "dissipeuler",
    version,
    about = "Stochastic Euler vanishing-viscosity experiments and audits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (must be absent or empty).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Trajectories and the discrete energy inequality.
    Simulate(RunArgs),
    /// Viscosity ladder, Young measures and the limit energy inequality.
    Vanish(RunArgs),
    /// Young measure export and the weak momentum balance.
    Ym(RunArgs),
    /// Martingale identification statistics.
    Martingale(RunArgs),
    /// Relative energy against a resolved reference.
    Weakstrong(RunArgs),
    /// Summarize a run directory.
    Report { dir: PathBuf },
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    let (experiment, args) = match cli.command {
        Command::Report { dir } => {
            let r = report_render(&dir)?;
            print!("{}", r.text);
            return Ok(r.pass);
        }
        Command::Simulate(a) => (Experiment::Simulate, a),
        Command::Vanish(a) => (Experiment::Vanish, a),
        Command::Ym(a) => (Experiment::Ym, a),
        Command::Martingale(a) => (Experiment::Martingale, a),
        Command::Weakstrong(a) => (Experiment::Weakstrong, a),
    };
    let summary = with_threads(args.threads, || {
        run(experiment, &args.config, args.seed, args.out.as_deref())
    })??;
    let r = report_render(&summary.dir)?;
    print!("{}", r.text);
    Ok(summary.manifest.pass)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
