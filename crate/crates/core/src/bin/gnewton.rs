use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use grassmann_newton::harness::{self, props, ExperimentConfig};
use grassmann_newton::solver::Status;

#[derive(Parser)]
#[command(
    name = "gnewton",
    about = "Inexact Riemannian Newton solvers for energy minimization over orthonormal frames"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON configuration file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run several configurations (same model and seed, different solvers)
    /// and print a summary table.
    Compare {
        configs: Vec<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Execute the full invariant suite and print one pass/fail line per
    /// property.
    Props,
}

#[derive(clap::Args)]
struct Overrides {
    /// Override the configured random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for convergence CSV logs.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override the configured retraction (qr|pd|wy|ga-pade2|ga-pade3|geodesic).
    #[arg(long)]
    retraction: Option<String>,
    /// Override the configured Hessian mode (exact|approx).
    #[arg(long)]
    hessian: Option<String>,
}

fn load_config(
    path: &PathBuf,
    overrides: &Overrides,
    slot: usize,
) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut raw: harness::RawConfig =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(seed) = overrides.seed {
        raw.seed = Some(seed);
    }
    if let Some(r) = &overrides.retraction {
        raw.retraction = Some(r.clone());
    }
    if let Some(h) = &overrides.hessian {
        raw.hessian = Some(h.clone());
    }
    if let Some(dir) = &overrides.out_dir {
        let name = raw
            .output
            .clone()
            .unwrap_or_else(|| format!("{}-{slot}.csv", raw.solver));
        raw.output = Some(dir.join(name).to_string_lossy().into_owned());
    }
    harness::resolve_config(raw).map_err(|e| format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, overrides } => {
            let cfg = match load_config(&config, &overrides, 0) {
                Ok(cfg) => cfg,
                Err(msg) => {
                    eprintln!("config error: {msg}");
                    return ExitCode::from(2);
                }
            };
            match harness::run_experiment(&cfg) {
                Ok(outcome) => {
                    let last = outcome.log.rows.last();
                    println!(
                        "{}: status {} after {} iterations, energy {:.12e}, grad norm {:.3e}",
                        cfg.solver_kind.name(),
                        outcome.result.status.name(),
                        outcome.result.iterations(),
                        last.map(|r| r.energy).unwrap_or(f64::NAN),
                        last.map(|r| r.grad_norm).unwrap_or(f64::NAN),
                    );
                    for event in &outcome.result.events {
                        eprintln!("note: {event}");
                    }
                    if let Some(path) = &cfg.output {
                        println!("log written to {}", path.display());
                    }
                    if outcome.result.status == Status::Converged {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("run failed: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Compare { configs, overrides } => {
            if configs.len() < 2 {
                eprintln!("config error: compare needs at least two configuration files");
                return ExitCode::from(2);
            }
            let mut parsed = Vec::new();
            for (slot, path) in configs.iter().enumerate() {
                match load_config(path, &overrides, slot) {
                    Ok(cfg) => parsed.push(cfg),
                    Err(msg) => {
                        eprintln!("config error: {msg}");
                        return ExitCode::from(2);
                    }
                }
            }
            match harness::compare(&parsed) {
                Ok(comparison) => {
                    print!("{}", comparison.render_table());
                    for (cfg, log) in parsed.iter().zip(&comparison.logs) {
                        if let Some(path) = &cfg.output {
                            if let Err(e) = harness::write_log(path, log) {
                                eprintln!("cannot write {}: {e}", path.display());
                                return ExitCode::from(1);
                            }
                            println!("log written to {}", path.display());
                        }
                    }
                    if comparison.rows.iter().all(|r| r.status == Status::Converged) {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("compare failed: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Props => {
            let mut failures = 0usize;
            for (name, result) in props::run_all() {
                match result {
                    Ok(()) => println!("[pass] {name}"),
                    Err(msg) => {
                        failures += 1;
                        println!("[FAIL] {name}: {msg}");
                    }
                }
            }
            if failures == 0 {
                println!("all properties hold");
                ExitCode::SUCCESS
            } else {
                println!("{failures} properties failed");
                ExitCode::from(1)
            }
        }
    }
}
