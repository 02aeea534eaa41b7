//! Batch runner: `simulate --scenario <name> --config <path> --out <dir>`.
//!
//! Exit status 0 on success, 2 on a configuration error, 3 when some
//! replicas failed (the outputs of the others are still written), 1 on any
//! other error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nbbm::experiments::{execute, write_outputs, ScenarioConfig, SCENARIOS};
use nbbm::Error;

#[derive(Parser, Debug)]
#[command(name = "simulate", version, about = "Run a branching Brownian motion scenario")]
struct Cli {
    /// Scenario name; must match the config file when both are given.
    #[arg(long)]
    scenario: String,
    /// JSON scenario config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, env = "NBBM_OUT_DIR")]
    out: PathBuf,
    /// Base seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Replicas per population size, overriding the config.
    #[arg(long)]
    replicas: Option<usize>,
    /// Worker threads, overriding the config.
    #[arg(long, env = "NBBM_THREADS")]
    threads: Option<usize>,
}

fn load(cli: &Cli) -> Result<ScenarioConfig, Error> {
    let mut cfg = ScenarioConfig::from_path(&cli.config)?;
    if !SCENARIOS.contains(&cli.scenario.as_str()) {
        return Err(Error::Config(format!(
            "unknown scenario {:?}; expected one of {}",
            cli.scenario,
            SCENARIOS.join(", ")
        )));
    }
    if cfg.scenario != cli.scenario {
        return Err(Error::Config(format!(
            "config {} describes scenario {:?}, not {:?}",
            cli.config.display(),
            cfg.scenario,
            cli.scenario
        )));
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = cli.replicas {
        cfg.replicas = r;
        cfg.replicas_per_n = None;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("simulate: {e}");
            return ExitCode::from(2);
        }
    };
    let run = match execute(&cfg) {
        Ok(r) => r,
        Err(e @ (Error::Config(_) | Error::Argument(_))) => {
            eprintln!("simulate: {e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("simulate: {e}");
            return ExitCode::from(1);
        }
    };
    match write_outputs(&run, &cfg, &cli.out) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
        }
        Err(e) => {
            eprintln!("simulate: {e}");
            return ExitCode::from(1);
        }
    }
    if let Err(e) = run.check() {
        eprintln!("simulate: {e}");
        return ExitCode::from(3);
    }
    ExitCode::SUCCESS
}
