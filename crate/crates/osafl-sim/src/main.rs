//! `osafl` — run reproducible federated-learning-over-wireless experiments.
//!
//! Subcommands: `run` (one or more seeds of one protocol), `presets list`
//! / `presets show`, and `validate`. Set `RUST_LOG` for verbosity. Exit
//! codes: 0 on success, 2 for configuration problems, 1 otherwise.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use osafl_sim::config::{ConfigError, ExperimentConfig, Protocol};
use osafl_sim::{metrics, presets, runner};

#[derive(Parser)]
#[command(name = "osafl", version, about = "Federated learning over a constrained wireless network, simulated deterministically")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write metrics CSVs.
    Run {
        /// Path to a TOML experiment config.
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Name of a built-in preset (see `presets list`).
        #[arg(long)]
        preset: Option<String>,
        /// Override the protocol under test.
        #[arg(long)]
        protocol: Option<Protocol>,
        /// Override the seed.
        #[arg(long, conflicts_with = "seeds")]
        seed: Option<u64>,
        /// Run several seeds (comma-separated) and write a mean±std
        /// summary CSV alongside the per-seed files.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the worker thread count (0 = all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Inspect the built-in presets.
    Presets {
        #[command(subcommand)]
        command: PresetsCommand,
    },
    /// Parse and validate a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum PresetsCommand {
    /// List preset names.
    List,
    /// Print a preset as a TOML document.
    Show { name: String },
}

fn main() -> ExitCode {
    env_logger::init();
    match dispatch() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.is::<ConfigError>() || err.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn dispatch() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            preset,
            protocol,
            seed,
            seeds,
            out,
            workers,
        } => {
            let mut cfg = load(config.as_deref(), preset.as_deref())?;
            if let Some(p) = protocol {
                cfg.protocol = p;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(dir) = out {
                cfg.output.dir = dir;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            cfg.validate()?;
            let seeds = seeds.unwrap_or_else(|| vec![cfg.seed]);
            run_seeds(&cfg, &seeds)
        }
        Command::Presets { command } => {
            match command {
                PresetsCommand::List => {
                    for (name, blurb) in presets::catalog() {
                        println!("{name:<16} {blurb}");
                    }
                }
                PresetsCommand::Show { name } => {
                    let cfg = presets::by_name(&name)
                        .ok_or_else(|| ConfigError(format!("unknown preset {name:?}")))?;
                    print!("{}", cfg.to_toml_string());
                }
            }
            Ok(())
        }
        Command::Validate { config } => {
            ExperimentConfig::from_path(&config)?;
            println!("{}: ok", config.display());
            Ok(())
        }
    }
}

fn load(config: Option<&std::path::Path>, preset: Option<&str>) -> Result<ExperimentConfig> {
    match (config, preset) {
        (Some(path), None) => Ok(ExperimentConfig::from_path(path)?),
        (None, Some(name)) => presets::by_name(name)
            .ok_or_else(|| ConfigError(format!("unknown preset {name:?}")).into()),
        (None, None) => Err(ConfigError("pass --config <path> or --preset <name>".into()).into()),
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    }
}

fn run_seeds(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<()> {
    std::fs::create_dir_all(&cfg.output.dir)
        .with_context(|| format!("creating {}", cfg.output.dir.display()))?;
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut one = cfg.clone();
        one.seed = seed;
        let output = runner::run(&one)?;
        let path = one
            .output
            .dir
            .join(format!("metrics-{}-seed{}.csv", one.protocol.id(), seed));
        metrics::write_metrics(&output.rows, &path)?;
        if let Some(last) = output.rows.last() {
            println!(
                "{} seed {}: {} rounds, final accuracy {:.4}, wrote {}",
                one.protocol.id(),
                seed,
                output.rows.len(),
                last.test_accuracy,
                path.display()
            );
        }
        runs.push(output.rows);
    }
    if runs.len() > 1 {
        let summary = metrics::summarize(&runs)?;
        let path = cfg
            .output
            .dir
            .join(format!("summary-{}.csv", cfg.protocol.id()));
        metrics::write_summary(&summary, &path)?;
        println!("summary over {} seeds: {}", runs.len(), path.display());
    }
    Ok(())
}
