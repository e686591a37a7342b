// SPDX-License-Identifier: Apache-2.0

//! `relbell`: run curved-spacetime Bell scenarios from JSON configurations.
//!
//! Exit codes: 0 success, 2 configuration error, 3 geometry or integration
//! error, 4 statistical audit failure.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use relbell::scenario::{
    audit_scenario, csv_string, flat_space_selftest, load_config, run_horizon_sweep, run_scenario, run_sweep,
    with_workers, CsvRow, HorizonSweep, RowStatus, ScenarioConfig, ScenarioError,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_GEOMETRY: u8 = 3;
const EXIT_AUDIT: u8 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "relbell",
    version,
    about = "Bell correlations between particles in curved spacetime"
)]
struct Cli {
    /// Integrator tolerance, overriding the configuration.
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Monte Carlo seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Suppress progress and summary messages on stderr.
    #[arg(long, global = true)]
    quiet: bool,

    /// Worker threads for sweeps and sampling (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and report every intermediate quantity.
    Run {
        /// Scenario configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report format.
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Evaluate the configured sweep and write one CSV row per point.
    Sweep {
        /// Scenario configuration with a sweep block.
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Projection weight as the right detector falls towards a Schwarzschild horizon.
    Horizon {
        /// Black hole mass M.
        #[arg(long)]
        mass: f64,
        /// Radius of the emission event.
        #[arg(long = "r-start")]
        r_start: f64,
        /// Last readout radius.
        #[arg(long = "r-end")]
        r_end: f64,
        /// Number of readout radii, evenly spaced from r-start to r-end.
        #[arg(long)]
        steps: usize,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo audit of the sign hidden-variable model for a scenario.
    LhvAudit {
        /// Scenario configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Monte Carlo samples per correlation.
        #[arg(long)]
        n: usize,
    },
    /// Flat-space reduction checks.
    Selftest,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Text,
    Csv,
    Json,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure {
            code: if e.is_config() { EXIT_CONFIG } else { EXIT_GEOMETRY },
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: format!("cannot write {}: {e}", path.display()),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| io_failure(p, e)),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| io_failure(Path::new("<stdout>"), e)),
    }
}

fn load(cli: &Cli, path: &Path) -> Result<ScenarioConfig, Failure> {
    let mut cfg = load_config(path)?;
    if let Some(tol) = cli.tol {
        if !(tol.is_finite() && tol > 0.0 && tol < 1.0) {
            return Err(Failure {
                code: EXIT_CONFIG,
                message: format!("--tol must lie in (0, 1), got {tol}"),
            });
        }
        cfg.tol = tol;
    }
    if let Some(seed) = cli.seed {
        cfg.mc.seed = seed;
    }
    Ok(cfg)
}

fn note(cli: &Cli, msg: impl AsRef<str>) {
    if !cli.quiet {
        eprintln!("{}", msg.as_ref());
    }
}

fn summarize_rows(cli: &Cli, rows: &[CsvRow], out: &Path) {
    let ok = rows.iter().filter(|r| r.status == RowStatus::Ok).count();
    note(cli, format!("wrote {} rows ({ok} ok) to {}", rows.len(), out.display()));
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run { config, out, format } => {
            let cfg = load(cli, config)?;
            let report = run_scenario(&cfg)?;
            let text = match format {
                Format::Text => report.to_text(),
                Format::Csv => csv_string(&[report.csv_row()]),
                Format::Json => serde_json::to_string_pretty(&report).expect("reports serialize to JSON") + "\n",
            };
            emit(out.as_deref(), &text)?;
            note(cli, format!("completed in {:.3} s", report.elapsed.as_secs_f64()));
            if !report.audit_passed() {
                return Err(Failure {
                    code: EXIT_AUDIT,
                    message: "local hidden-variable audit failed at 4 sigma".into(),
                });
            }
            Ok(())
        }
        Command::Sweep { config, out } => {
            let cfg = load(cli, config)?;
            let rows = run_sweep(&cfg, cli.workers)?;
            emit(Some(out), &csv_string(&rows))?;
            summarize_rows(cli, &rows, out);
            if let Some(bad) = rows.iter().find(|r| r.status != RowStatus::Ok) {
                return Err(Failure {
                    code: EXIT_GEOMETRY,
                    message: format!("row {} finished with status {}", bad.scenario_id, bad.status.as_str()),
                });
            }
            Ok(())
        }
        Command::Horizon {
            mass,
            r_start,
            r_end,
            steps,
            out,
        } => {
            let mut sweep = HorizonSweep::new(*mass, *r_start, *r_end, *steps);
            if let Some(tol) = cli.tol {
                sweep.tol = tol;
            }
            let rows = run_horizon_sweep(&sweep, cli.workers)?;
            emit(Some(out), &csv_string(&rows))?;
            summarize_rows(cli, &rows, out);
            if let Some(bad) = rows.iter().find(|r| r.status == RowStatus::Error) {
                return Err(Failure {
                    code: EXIT_GEOMETRY,
                    message: format!("row {} failed", bad.scenario_id),
                });
            }
            Ok(())
        }
        Command::LhvAudit { config, n } => {
            let cfg = load(cli, config)?;
            let seed = cfg.mc.seed;
            let report = with_workers(cli.workers, || audit_scenario(&cfg, *n, seed))??;
            let mut text = format!("sign model audit: n = {}, seed = {}\n", report.n, report.seed);
            for (i, c) in report.cases.iter().enumerate() {
                let label = if i == 0 { "configured a" } else { "optimal a*" };
                text += &format!(
                    "  {label}: P_ab = {:.6} P_ac = {:.6} P_bc = {:.6}  lhs = {:.6} rhs = {:.6} sigma = {:.2e}  {}\n",
                    c.p_ab.mean,
                    c.p_ac.mean,
                    c.p_bc.mean,
                    c.lhs,
                    c.rhs,
                    c.combined_stderr,
                    if c.passed { "pass" } else { "FAIL" }
                );
            }
            text += &format!("violations beyond 4 sigma: {}\n", report.violations);
            emit(None, &text)?;
            if !report.passed {
                return Err(Failure {
                    code: EXIT_AUDIT,
                    message: "local hidden-variable audit failed at 4 sigma".into(),
                });
            }
            Ok(())
        }
        Command::Selftest => {
            let report = with_workers(cli.workers, || flat_space_selftest(cli.seed.unwrap_or(0), 100))??;
            let mut text = String::new();
            for c in &report.checks {
                text += &format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            emit(None, &text)?;
            if !report.passed {
                return Err(Failure {
                    code: EXIT_AUDIT,
                    message: "flat-space self test failed".into(),
                });
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
