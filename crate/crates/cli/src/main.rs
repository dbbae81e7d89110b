//! slfib — Cartan-test rank counts, torus-symmetric Calabi-Yau evolution
//! and special Lagrangian fibration invariants, driven by scenario files.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use slfib_cli::runner;
use slfib_cli::scenario::{self, ScenarioConfig};
use slfib_cli::CliError;

#[derive(Debug, Parser)]
#[command(name = "slfib", version, about = "special Lagrangian fibration toolkit")]
struct Cli {
    /// Cap the rayon worker count (default: all cores). Outputs are
    /// deterministic regardless of the value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ScenarioArg {
    /// Scenario file (sectioned key-value format).
    #[arg(long)]
    scenario: PathBuf,
    /// Override [tolerances].verify_tol.
    #[arg(long)]
    tol: Option<f64>,
}

impl ScenarioArg {
    fn load(&self) -> Result<ScenarioConfig, CliError> {
        let mut config = scenario::parse_scenario(&self.scenario)?;
        if let Some(tol) = self.tol {
            config.tolerances.verify_tol = tol;
        }
        Ok(config)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Flag-level polar subspace dimensions, codimensions and extension
    /// ranks for the standard SU(n) structure, plus the Cartan sum.
    Cartan {
        /// Complex dimension n ≥ 2.
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evolve the scenario (when configured) and report the residuals of
    /// the structure equations as JSON.
    Verify {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Also dump per-node residual magnitudes at the worst trajectory
        /// point as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Integrate the staged evolution system and write one snapshot CSV
    /// per stored t-point plus a manifest.
    Evolve {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fibration invariants: Φ-scan table and optional geometry dumps.
    Fibration {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Scan axes (only "t1,t2" is supported); ranges come from the
        /// scenario [outputs] section or default to the trajectory grid.
        #[arg(long, default_value = "t1,t2")]
        scan: String,
        /// Φ-scan CSV path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dump a full geometry JSON at "t1,t2,y".
        #[arg(long)]
        geometry: Option<String>,
    },
    /// Execute every pipeline the scenario requests, in dependency order,
    /// and write a run manifest.
    Run {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn emit_json(value: &serde_json::Value, out: Option<&PathBuf>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    match out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Cartan { n, out } => {
            let report = runner::cartan_report_json(n)?;
            emit_json(&report, out.as_ref())
        }
        Command::Verify { scenario, csv, json } => {
            let config = scenario.load()?;
            let traj = runner::evolve_scenario(&config)?;
            let report = runner::verify_report_for(&config, &traj)?;
            if let Some(path) = csv {
                runner::verify_csv(&config, &traj)?.write_to(&path)?;
            }
            emit_json(&report, json.as_ref())
        }
        Command::Evolve { scenario, out } => {
            let config = scenario.load()?;
            let manifest = runner::evolve_to_dir(&config, &out)?;
            eprintln!(
                "wrote {} snapshots to {}",
                manifest["snapshots"].as_array().map(|a| a.len()).unwrap_or(0),
                out.display()
            );
            Ok(())
        }
        Command::Fibration { scenario, scan, out, geometry } => {
            if scan != "t1,t2" {
                return Err(CliError::Validation(format!(
                    "unsupported scan axes `{scan}`; only `t1,t2` is available"
                )));
            }
            let config = scenario.load()?;
            let traj = runner::evolve_scenario(&config)?;
            match &out {
                Some(path) => runner::phi_scan_table(&config, &traj)?.write_to(path)?,
                None => print!("{}", runner::phi_scan_table(&config, &traj)?.to_string()),
            }
            if let Some(point) = geometry {
                let parts: Vec<f64> = point
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| {
                        CliError::Validation(format!(
                            "--geometry expects `t1,t2,y`, got `{point}`"
                        ))
                    })?;
                if parts.len() != 3 {
                    return Err(CliError::Validation(format!(
                        "--geometry expects `t1,t2,y`, got `{point}`"
                    )));
                }
                let value = runner::geometry_json(&traj, (parts[0], parts[1], parts[2]))?;
                emit_json(&value, None)?;
            }
            Ok(())
        }
        Command::Run { scenario, out } => {
            let bytes = std::fs::read(&scenario.scenario)?;
            let config = scenario.load()?;
            let manifest = runner::run_all(&config, &out, &bytes)?;
            eprintln!(
                "run complete: {} outputs in {}",
                manifest["outputs"].as_array().map(|a| a.len()).unwrap_or(0),
                out.display()
            );
            Ok(())
        }
    }
}
