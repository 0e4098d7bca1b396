//! `nleig` — batch front-end for the nonlinear eigenpair library.
//!
//! Three commands:
//!
//! - `nleig run <config>` executes one configured run and writes its
//!   artifacts (config copy, history, final field, diagnostics, summary)
//!   into a fresh run directory.
//! - `nleig validate <field> <config>` recomputes diagnostics for a stored
//!   field under the config's operator, without running anything.
//! - `nleig sweep <config> <section.key> <v1,v2,...>` repeats a run for
//!   each value of one numeric key and aggregates a comparison CSV.
//!
//! Exit codes: 0 success/converged, 2 input error (config, files, shapes),
//! 3 completed without converging, 4 solver failure.

mod config;
mod output;
mod runner;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};

use config::{RawConfig, RunConfig};
use runner::{CliError, CliResult, RunOutcome};

const EXIT_OK: i32 = 0;
const EXIT_INPUT: i32 = 2;
const EXIT_NO_CONVERGENCE: i32 = 3;
const EXIT_SOLVER: i32 = 4;

#[derive(Parser)]
#[command(
    name = "nleig",
    version,
    about = "Eigenpairs of nonlinear operators: iterative flows, power methods, diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Write run directories under this directory (overrides the config).
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,

    /// Override the noise seed from the config (noise inits only).
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<u64>,

    /// Suppress progress output on stdout.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a configured run and export its artifacts.
    Run {
        /// Path of the run configuration.
        config: PathBuf,
    },
    /// Recompute diagnostics for a stored field under a config's operator.
    Validate {
        /// CSV field to check (one value per row).
        field: PathBuf,
        /// Config naming the domain and operator/functional.
        config: PathBuf,
    },
    /// Run a config once per value of one numeric key; aggregate a CSV.
    Sweep {
        /// Path of the base run configuration.
        config: PathBuf,
        /// Qualified key to vary, e.g. `numeric.dt` or `init.seed`.
        param: String,
        /// Comma-separated list of values.
        values: String,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(&cli) {
        Ok(code) => code,
        Err(CliError::Input(m)) => {
            eprintln!("error: {m}");
            EXIT_INPUT
        }
        Err(CliError::Solver(m)) => {
            eprintln!("error: {m}");
            EXIT_SOLVER
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: &Cli) -> CliResult<i32> {
    match &cli.command {
        Command::Run { config } => cmd_run(config, cli),
        Command::Validate { field, config } => cmd_validate(field, config, cli),
        Command::Sweep { config, param, values } => cmd_sweep(config, param, values, cli),
    }
}

fn load_config(path: &Path, cli: &Cli) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
    let raw = RawConfig::parse(&text, &path.display().to_string())?;
    let mut cfg = RunConfig::from_raw(&raw)?;
    apply_overrides(&mut cfg, cli)?;
    Ok(cfg)
}

fn apply_overrides(cfg: &mut RunConfig, cli: &Cli) -> CliResult<()> {
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

fn cmd_run(config_path: &Path, cli: &Cli) -> CliResult<i32> {
    let cfg = load_config(config_path, cli)?;
    let (_, outcome) = run_config(&cfg, cli.quiet)?;
    Ok(if outcome.converged { EXIT_OK } else { EXIT_NO_CONVERGENCE })
}

/// Full run pipeline for an already validated config. Input-class problems
/// (unbuildable domain, missing files) surface before the run directory is
/// created, so they leave no partial outputs. Solver failures after that
/// point leave the directory with an `ERROR.txt` marker.
fn run_config(cfg: &RunConfig, quiet: bool) -> CliResult<(PathBuf, RunOutcome)> {
    let domain = runner::build_domain(&cfg.domain)?;
    runner::preflight(cfg, &domain)?;
    let canonical = cfg.canonical_string();
    let dir = output::create_run_dir(&cfg.output_dir, &canonical)?;
    if !quiet {
        println!("run_dir = {}", dir.display());
    }
    let outcome = match runner::execute(cfg, &domain) {
        Ok(outcome) => outcome,
        Err(e) => {
            output::write_error_marker(&dir, &e.to_string());
            return Err(e);
        }
    };
    if let Err(e) = output::write_artifacts(&dir, &canonical, &outcome, &domain) {
        output::write_error_marker(&dir, &e.to_string());
        return Err(e);
    }
    if !quiet {
        println!(
            "result: converged={} iterations={} lambda={} theta={} residual={}",
            outcome.converged, outcome.iterations, outcome.lambda, outcome.theta, outcome.residual
        );
    }
    Ok((dir, outcome))
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

fn cmd_validate(field_path: &Path, config_path: &Path, cli: &Cli) -> CliResult<i32> {
    let cfg = load_config(config_path, cli)?;
    let domain = runner::build_domain(&cfg.domain)?;
    let u = nleig::io::read_signal_csv(field_path, domain.as_domain())
        .map_err(CliError::from)?;
    let (_theta, text) = runner::validate_field(&cfg, &domain, &u)?;
    print!("{text}");
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

fn cmd_sweep(config_path: &Path, param: &str, values: &str, cli: &Cli) -> CliResult<i32> {
    let (section, key) = param.split_once('.').ok_or_else(|| {
        CliError::Input(format!(
            "parameter must be qualified as section.key (e.g. numeric.dt), got '{param}'"
        ))
    })?;
    let values: Vec<&str> = values
        .split(',')
        .map(|v| v.trim())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(CliError::Input("sweep needs at least one value".to_string()));
    }
    if cli.seed.is_some() && section == "init" && key == "seed" {
        return Err(CliError::Input(
            "--seed conflicts with sweeping init.seed; drop one of the two".to_string(),
        ));
    }

    let text = fs::read_to_string(config_path).map_err(|e| {
        CliError::Input(format!("cannot read config {}: {e}", config_path.display()))
    })?;
    let base = RawConfig::parse(&text, &config_path.display().to_string())?;

    // Fail fast on an unknown or non-numeric key, before any run starts.
    {
        let mut probe = base.clone();
        probe.set_numeric(section, key, values[0])?;
    }

    // The aggregation CSV lives next to the run directories.
    let parent = cli
        .output_dir
        .clone()
        .unwrap_or_else(|| sweep_parent_dir(&base, cli));
    fs::create_dir_all(&parent).map_err(|e| {
        CliError::Input(format!("cannot create output directory {}: {e}", parent.display()))
    })?;

    let mut rows = String::from("value,lambda,theta,iterations\n");
    for value in &values {
        let outcome = sweep_one(&base, section, key, value, cli);
        match outcome {
            Ok(out) => {
                rows.push_str(&format!(
                    "{value},{},{},{}\n",
                    out.lambda, out.theta, out.iterations
                ));
                if !cli.quiet {
                    println!(
                        "sweep {param} = {value}: converged={} lambda={}",
                        out.converged, out.lambda
                    );
                }
            }
            Err(e) => {
                eprintln!("sweep {param} = {value} failed: {e}");
                rows.push_str(&format!("{value},,,\n"));
            }
        }
    }

    let csv_path = fresh_sweep_csv_path(&parent, section, key)?;
    fs::write(&csv_path, rows)
        .map_err(|e| CliError::Solver(format!("cannot write {}: {e}", csv_path.display())))?;
    println!("sweep_csv = {}", csv_path.display());
    Ok(EXIT_OK)
}

fn sweep_one(
    base: &RawConfig,
    section: &str,
    key: &str,
    value: &str,
    cli: &Cli,
) -> CliResult<RunOutcome> {
    let mut raw = base.clone();
    raw.set_numeric(section, key, value)?;
    let mut cfg = RunConfig::from_raw(&raw)?;
    apply_overrides(&mut cfg, cli)?;
    let (_, outcome) = run_config(&cfg, true)?;
    Ok(outcome)
}

/// Default parent for the sweep CSV: the base config's output_dir.
fn sweep_parent_dir(base: &RawConfig, cli: &Cli) -> PathBuf {
    RunConfig::from_raw(base)
        .map(|mut cfg| {
            let _ = apply_overrides(&mut cfg, cli);
            cfg.output_dir
        })
        .unwrap_or_else(|_| PathBuf::from("runs"))
}

fn fresh_sweep_csv_path(parent: &Path, section: &str, key: &str) -> CliResult<PathBuf> {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    for suffix in 0..usize::MAX {
        let name = if suffix == 0 {
            format!("sweep-{section}-{key}-{secs}.csv")
        } else {
            format!("sweep-{section}-{key}-{secs}-{suffix}.csv")
        };
        let candidate = parent.join(name);
        if !candidate.exists() {
            return Ok(candidate);
        }
    }
    Err(CliError::Solver("cannot find a fresh sweep CSV name".to_string()))
}
