//! `fluctuon`: experiment runner for the long-jump exclusion simulator.

mod config;
mod experiments;
mod svg;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "fluctuon",
    about = "Boundary-driven long-jump exclusion process: simulation vs theory",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a config file.
    Run {
        config: PathBuf,
        /// Override the base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the replica count.
        #[arg(long)]
        replicas: Option<usize>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<String>,
    },
    /// Parse and validate a config file without running it.
    Validate { config: PathBuf },
    /// Summarize a finished run directory.
    Report { run_dir: PathBuf },
}

fn load_config(
    path: &PathBuf,
    seed: Option<u64>,
    replicas: Option<usize>,
    out: Option<String>,
) -> Result<config::ExperimentConfig, String> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut cfg = config::parse_config(&text).map_err(|errs| {
        let mut msg = format!("{} problem(s) in {}:\n", errs.len(), path.display());
        for e in &errs {
            msg.push_str("  - ");
            msg.push_str(e);
            msg.push('\n');
        }
        msg
    })?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(r) = replicas {
        cfg.replicas = r;
    }
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed,
            replicas,
            out,
        } => {
            let cfg = match load_config(&config, seed, replicas, out) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(2);
                }
            };
            match experiments::run_experiment(&cfg) {
                Ok(outcome) => {
                    println!(
                        "{}: {} -> {}",
                        cfg.id.as_str(),
                        if outcome.pass { "PASS" } else { "FAIL" },
                        outcome.dir.display()
                    );
                    println!("{}", outcome.summary);
                    if outcome.pass {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::FAILURE
                    }
                }
                Err(e) => {
                    eprintln!("run failed: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Validate { config } => match load_config(&config, None, None, None) {
            Ok(cfg) => {
                println!("ok: {} (hash {:016x})", cfg.id.as_str(), cfg.hash());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(2)
            }
        },
        Command::Report { run_dir } => {
            let path = run_dir.join("manifest.json");
            match fs::read_to_string(&path) {
                Ok(text) => match serde_json::from_str::<serde_json::Value>(&text) {
                    Ok(v) => {
                        println!(
                            "experiment: {}",
                            v["experiment"].as_str().unwrap_or("?")
                        );
                        println!("pass: {}", v["pass"]);
                        println!("seed: {}", v["seed"]);
                        println!("config hash: {}", v["config_hash"]);
                        println!(
                            "wall clock: {:.2}s",
                            v["wall_clock_secs"].as_f64().unwrap_or(f64::NAN)
                        );
                        println!("summary: {}", v["summary"]);
                        ExitCode::SUCCESS
                    }
                    Err(e) => {
                        eprintln!("bad manifest {}: {e}", path.display());
                        ExitCode::from(2)
                    }
                },
                Err(e) => {
                    eprintln!("cannot read {}: {e}", path.display());
                    ExitCode::from(2)
                }
            }
        }
    }
}
