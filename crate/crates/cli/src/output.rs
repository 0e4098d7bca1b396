//! Run artifacts. Every run gets its own directory named by a hash of the
//! resolved config plus a timestamp, so directories are append-only and a
//! rerun never overwrites earlier results. A run directory ends up either
//! complete (config, history, field, diagnostics, summary) or carrying an
//! `ERROR.txt` marker — never silently truncated.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use nleig::io::{self, PgmDepth};

use crate::runner::{BuiltDomain, CliError, CliResult, RunOutcome};

/// 12 hex characters of the SHA-256 of the canonical config text.
pub fn config_hash(canonical: &str) -> String {
    let digest = Sha256::digest(canonical.as_bytes());
    let mut s = String::with_capacity(12);
    for byte in digest.iter().take(6) {
        s.push_str(&format!("{byte:02x}"));
    }
    s
}

/// Create `<parent>/<hash12>-<unix-seconds>[ -n ]`, never reusing an
/// existing directory.
pub fn create_run_dir(parent: &Path, canonical: &str) -> CliResult<PathBuf> {
    let hash = config_hash(canonical);
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    fs::create_dir_all(parent)
        .map_err(|e| CliError::Input(format!("cannot create output directory {}: {e}", parent.display())))?;
    let mut suffix = 0usize;
    loop {
        let name = if suffix == 0 {
            format!("{hash}-{secs}")
        } else {
            format!("{hash}-{secs}-{suffix}")
        };
        let candidate = parent.join(name);
        match fs::create_dir(&candidate) {
            Ok(()) => return Ok(candidate),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                suffix += 1;
            }
            Err(e) => {
                return Err(CliError::Input(format!(
                    "cannot create run directory {}: {e}",
                    candidate.display()
                )))
            }
        }
    }
}

/// Drop an error marker into a run directory so a partially written run is
/// recognizable. Best effort: marker failures are swallowed, the original
/// error matters more.
pub fn write_error_marker(dir: &Path, message: &str) {
    let _ = fs::write(dir.join("ERROR.txt"), format!("{message}\n"));
}

/// `key = value` lines with the quantities downstream tooling reads.
pub fn summary_text(outcome: &RunOutcome, nodes: usize) -> String {
    format!(
        "algorithm = {}\nnodes = {}\nconverged = {}\niterations = {}\nlambda = {}\ntheta = {}\nresidual = {}\nhistory_rows = {}\n",
        outcome.algorithm.name(),
        nodes,
        outcome.converged,
        outcome.iterations,
        outcome.lambda,
        outcome.theta,
        outcome.residual,
        outcome.history_rows,
    )
}

/// Write the complete artifact set for a finished run:
/// `config.ini`, `history.csv`, `final_field.csv` (plus `final_field.pgm`
/// and its sidecar on 2D grids), `diagnostics.txt`, `summary.txt`.
pub fn write_artifacts(
    dir: &Path,
    canonical_config: &str,
    outcome: &RunOutcome,
    domain: &BuiltDomain,
) -> CliResult<()> {
    let write = |name: &str, text: &str| -> CliResult<()> {
        fs::write(dir.join(name), text).map_err(|e| {
            CliError::Solver(format!("cannot write {}: {e}", dir.join(name).display()))
        })
    };
    write("config.ini", canonical_config)?;
    write("history.csv", &outcome.history_csv)?;
    io::write_signal_csv(&dir.join("final_field.csv"), &outcome.u_star)
        .map_err(|e| CliError::Solver(format!("cannot write final_field.csv: {e}")))?;
    if let Some(grid) = domain.grid() {
        if grid.width() > 1 && grid.height() > 1 {
            io::write_pgm(&dir.join("final_field.pgm"), &outcome.u_star, grid, PgmDepth::Sixteen)
                .map_err(|e| CliError::Solver(format!("cannot write final_field.pgm: {e}")))?;
        }
    }
    write("diagnostics.txt", &outcome.diagnostics_text)?;
    write("summary.txt", &summary_text(outcome, domain.node_count()))?;
    Ok(())
}
