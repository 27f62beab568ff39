use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use wlde_core::config::{CriterionChoice, ExperimentConfig};
use wlde_core::experiment::{run, Command, RunOutcome, Target};
use wlde_core::Error;

#[derive(Debug, Parser)]
#[command(name = "wlde", version, about = "Bistable lattice dispersal experiments")]
struct Cli {
    /// Experiment config (TOML). Optional for `reproduce`, which ships its own.
    #[arg(long, global = true, env = "WLDE_CONFIG")]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, env = "WLDE_OUT", default_value = "out")]
    out: PathBuf,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "WLDE_THREADS")]
    threads: Option<usize>,

    /// Seed for the perturbation checks; overrides the config.
    #[arg(long, global = true, env = "WLDE_SEED")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Criterion {
    Acm,
    Mcm,
    Both,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run the lattice model and dump the trajectory.
    Simulate,
    /// Classify the homogeneous fixed points and write the phase portrait.
    Stability,
    /// Front tracking and asymptotic speeds, optionally as a sweep.
    Wavespeed,
    /// Spatial outbreak-size curves and their modality.
    Outbreak,
    /// Minimal-cost release by ACM, MCM or both.
    Optimize {
        #[arg(long, value_enum)]
        criterion: Option<Criterion>,
    },
    /// MCM against ACM over kernels, release shapes and outbreak sizes.
    Compare,
    /// Regenerate a figure or table with its shipped configuration.
    Reproduce {
        /// fig2 ... fig9 or table4
        target: String,
    },
}

fn load(cli: &Cli, target: Option<Target>) -> Result<ExperimentConfig, Error> {
    let mut config = match (&cli.config, target) {
        (Some(path), _) => ExperimentConfig::from_path(path)?,
        (None, Some(t)) => t.config()?,
        (None, None) => {
            return Err(Error::Config {
                path: "--config".into(),
                reason: "this subcommand needs a config file (or WLDE_CONFIG)".into(),
            })
        }
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Cmd::Optimize { criterion: Some(c) } = cli.command {
        config.optimize.criterion = match c {
            Criterion::Acm => CriterionChoice::Acm,
            Criterion::Mcm => CriterionChoice::Mcm,
            Criterion::Both => CriterionChoice::Both,
        };
    }
    Ok(config)
}

fn execute(cli: &Cli) -> Result<RunOutcome, Error> {
    let (command, target) = match &cli.command {
        Cmd::Simulate => (Command::Simulate, None),
        Cmd::Stability => (Command::Stability, None),
        Cmd::Wavespeed => (Command::Wavespeed, None),
        Cmd::Outbreak => (Command::Outbreak, None),
        Cmd::Optimize { .. } => (Command::Optimize, None),
        Cmd::Compare => (Command::Compare, None),
        Cmd::Reproduce { target } => {
            let t: Target = target.parse()?;
            (Command::Reproduce(t), Some(t))
        }
    };
    let config = load(cli, target)?;
    run(&command, &config, &cli.out)
}

fn report(outcome: &RunOutcome) {
    let m = &outcome.manifest;
    for f in &m.files {
        println!("wrote {}", outcome.manifest_path.with_file_name(&f.path).display());
    }
    for name in ["compare.txt", "optimize.txt"] {
        if m.files.iter().any(|f| f.path == name) {
            if let Ok(text) = std::fs::read_to_string(outcome.manifest_path.with_file_name(name)) {
                print!("{text}");
            }
        }
    }
    for c in m.checks.iter().filter(|c| !c.pass) {
        println!("check {} outside expectation (expected {:?}, computed {:?})", c.name, c.expected, c.computed);
    }
    println!("manifest {} sha256={}", outcome.manifest_path.display(), outcome.manifest_sha256);
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(&cli) {
        Ok(outcome) => {
            report(&outcome);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
