//! `vrcq` — tabular Q-learning simulation CLI.
//!
//! Subcommands: `solve` and `measures` operate on instance JSON files,
//! `run` and `sweep` execute experiment configs, `garnet` generates random
//! benchmark instances. Exit codes: 0 on success, 2 for configuration or
//! input errors, 3 for numeric failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vrcq_core::harness::{emit_results, run_sweep, ExperimentConfig};
use vrcq_core::{
    complexity_measures, exact_optimal_q, garnet, read_instance, write_instance, Error,
};

/// Environment variable overriding the experiment seed.
const SEED_ENV: &str = "VRCQ_SEED";

#[derive(Parser)]
#[command(
    name = "vrcq",
    version,
    about = "Tabular Q-learning simulation harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance exactly and print the optimal Q-table as JSON.
    Solve {
        /// Instance JSON file.
        instance: PathBuf,
        /// Sup-norm accuracy of the returned table.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Print the complexity measures {v, rho, span} of a policy-evaluation
    /// instance as JSON.
    Measures {
        /// Instance JSON file (must have a single action).
        instance: PathBuf,
    },
    /// Run a single-point experiment described by a config file.
    Run {
        /// Experiment config (flat TOML, see README).
        config: PathBuf,
        /// Root seed; overrides the config (VRCQ_SEED overrides both).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a discount-grid sweep described by a config file.
    Sweep {
        /// Experiment config (flat TOML, see README).
        config: PathBuf,
        /// Root seed; overrides the config (VRCQ_SEED overrides both).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate a random Garnet instance and write it as JSON.
    Garnet {
        #[arg(long)]
        states: usize,
        #[arg(long)]
        actions: usize,
        /// Branching factor: reachable next states per (x,u).
        #[arg(long)]
        branch: usize,
        /// Generation seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Discount factor of the emitted instance.
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        /// Reward-noise scale of the emitted instance.
        #[arg(long, default_value_t = 0.0)]
        sigma_r: f64,
        /// Output path.
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_numeric() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Solve { instance, tol } => {
            let mdp = read_instance(&instance)?;
            let q = exact_optimal_q(&mdp, tol)?;
            println!("{}", serde_json::to_string_pretty(&q)?);
            Ok(())
        }
        Command::Measures { instance } => {
            let mdp = read_instance(&instance)?;
            let measures = complexity_measures(&mdp)?;
            println!("{}", serde_json::to_string_pretty(&measures)?);
            Ok(())
        }
        Command::Run { config, seed } => {
            let mut config = ExperimentConfig::from_file(&config)?;
            apply_seed(&mut config, seed)?;
            if config.grid_gammas().len() != 1 {
                return Err(Error::Config(
                    "run expects a single grid point; use sweep for a gamma grid".into(),
                ));
            }
            execute(&config)
        }
        Command::Sweep { config, seed } => {
            let mut config = ExperimentConfig::from_file(&config)?;
            apply_seed(&mut config, seed)?;
            execute(&config)
        }
        Command::Garnet {
            states,
            actions,
            branch,
            seed,
            gamma,
            sigma_r,
            output,
        } => {
            let mdp = garnet(states, actions, branch, seed)?
                .with_gamma(gamma)?
                .with_sigma_r(sigma_r)?;
            write_instance(&mdp, &output)?;
            eprintln!(
                "wrote {}x{} instance (b={branch}, seed={seed}) to {}",
                states,
                actions,
                output.display()
            );
            Ok(())
        }
    }
}

/// Seed precedence: VRCQ_SEED env var, then --seed, then the config file.
fn apply_seed(config: &mut ExperimentConfig, flag: Option<u64>) -> Result<(), Error> {
    if let Some(seed) = flag {
        config.seed = seed;
    }
    if let Ok(text) = std::env::var(SEED_ENV) {
        config.seed = text
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV} must be a u64, got {text:?}")))?;
    }
    Ok(())
}

fn execute(config: &ExperimentConfig) -> Result<(), Error> {
    let result = run_sweep(config)?;
    if let Some(path) = &config.output {
        emit_results(&result, path, config.format, config.raw)?;
        eprintln!("wrote results to {path}");
    }
    let summary = serde_json::json!({
        "points": result.points,
        "slope": result.slope,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
