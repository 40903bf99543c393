use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eikonal_lab::cli::{run, Config, Experiment};
use eikonal_lab::suite::{run_battery, Battery};
use eikonal_lab::{Error, Result};

#[derive(Parser)]
#[command(name = "eikonal-lab", version, about = "Experiments on weak solutions of the 2D eikonal equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build a solution field and write it as EIKF1.
    Field(Common),
    /// Finite-difference Besov rates.
    Besov(Common),
    /// Entropy production battery.
    Entropy(Common),
    /// Kinetic measure and its L^p norms.
    Kinetic(Common),
    /// Trace one integral curve and audit its straightness.
    Trace(Common),
    /// Oscillation-set coverings across scales.
    Cover(Common),
    /// Strip construction for the disk boundary-value problem.
    Bc(Common),
    /// Run an acceptance battery: smoke, paper-scalings or full.
    Suite {
        battery: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn init_threads(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
    }
    Ok(())
}

fn experiment(kind: Experiment, common: Common) -> Result<ExitCode> {
    init_threads(common.threads)?;
    let cfg = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let outcome = run(kind, &cfg, &common.out)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    for p in &outcome.outputs {
        println!("{}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn suite(battery: &str, out: PathBuf, threads: Option<usize>) -> Result<ExitCode> {
    let battery: Battery = battery.parse()?;
    init_threads(threads)?;
    let results = run_battery(battery, &out)?;
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Field(c) => experiment(Experiment::Field, c),
        Command::Besov(c) => experiment(Experiment::Besov, c),
        Command::Entropy(c) => experiment(Experiment::Entropy, c),
        Command::Kinetic(c) => experiment(Experiment::Kinetic, c),
        Command::Trace(c) => experiment(Experiment::Trace, c),
        Command::Cover(c) => experiment(Experiment::Cover, c),
        Command::Bc(c) => experiment(Experiment::Bc, c),
        Command::Suite { battery, out, threads } => suite(&battery, out, threads),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
