use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use clesplit_cli::config::{self, ExperimentConfig, Scale};
use clesplit_cli::experiments::{self, algorithm_name, write_json};
use clesplit_cli::validate;

#[derive(Parser)]
#[command(name = "clesplit", version, about = "Splitting integrators and ABC inference for chemical Langevin models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML, or JSON by extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value = "desk")]
    scale: Scale,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate paths and noisy observations.
    Simulate,
    /// Compare end-time laws across schemes and step sizes.
    DistPreserve,
    /// Lotka-Volterra paths under several schemes and step sizes.
    PhasePortrait,
    /// ABC-SMC with and without data-conditional simulation.
    Infer,
    /// Run the oracle checks; exits nonzero on failure.
    Validate,
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli.config.as_ref().context("--config is required for this subcommand")?;
    let mut cfg = config::load(path, cli.scale)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
        if let Some(i) = cfg.infer.as_mut() {
            i.seeds = vec![s];
        }
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Simulate => {
            let s = experiments::simulate(&load(cli)?, &cli.out)?;
            eprintln!("wrote {} trajectories to {}", s.len(), cli.out.display());
        }
        Command::DistPreserve => {
            for r in experiments::dist_preserve(&load(cli)?, &cli.out)? {
                println!("{:<28} h={:<8} t={:<6} ks={:.4}", r.scheme, r.h, r.t, r.ks);
            }
        }
        Command::PhasePortrait => {
            for r in experiments::phase_portrait(&load(cli)?, &cli.out)? {
                println!(
                    "{:<28} h={:<8} clamped={}/{} non-finite={} breakdown={}",
                    r.scheme, r.h, r.paths_with_clamps, r.paths, r.paths_non_finite, r.breakdown
                );
            }
        }
        Command::Infer => {
            for r in experiments::infer(&load(cli)?, &cli.out)? {
                let last = r.run.report.rounds.iter().rev().find(|d| d.completed).expect("one completed round");
                println!(
                    "seed {} {:<11} rounds={} eps={:.4} calls={} stop={:?}",
                    r.seed,
                    algorithm_name(r.algorithm),
                    r.run.clouds.len(),
                    last.epsilon,
                    last.cumulative_simulator_calls,
                    r.run.report.stop_reason
                );
            }
        }
        Command::Validate => {
            let (spec, seed) = match &cli.config {
                Some(_) => {
                    let cfg = load(cli)?;
                    (cfg.validate, cfg.seed)
                }
                None => (Default::default(), cli.seed.unwrap_or(0)),
            };
            let report = validate::run_all(&spec, seed)?;
            std::fs::create_dir_all(&cli.out)?;
            write_json(&cli.out.join("validation.json"), &report)?;
            for s in &report.suites {
                println!("{} {}", if s.passed { "PASS" } else { "FAIL" }, s.name);
            }
            return Ok(report.passed);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
