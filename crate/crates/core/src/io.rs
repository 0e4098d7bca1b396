//! File formats: CSV for signals, histories, point clouds and matrices;
//! binary PGM (P5) with a plain-text scale sidecar for 2D fields.
//!
//! All floating-point output uses Rust's shortest-roundtrip `Display`
//! formatting, so written values parse back bit-identically and identical
//! data produces byte-identical files. Parsers report the offending line
//! on malformed input.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::domain::{Domain, GridDomain, PointCloud};
use crate::error::{Error, Result};
use crate::flows::IterationRecord;
use crate::signal::Signal;

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn parse_f64(tok: &str, path: &Path, line: usize, what: &str) -> Result<f64> {
    tok.trim()
        .parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("invalid {what}: {tok:?}")))
}

// ---------------------------------------------------------------------------
// Signals (node_id,value)
// ---------------------------------------------------------------------------

/// Render a signal in the `node_id,value` CSV format.
pub fn signal_csv_string(u: &Signal) -> String {
    let mut out = String::with_capacity(16 * u.len() + 16);
    out.push_str("node_id,value\n");
    for (i, v) in u.values().iter().enumerate() {
        let _ = writeln!(out, "{i},{v}");
    }
    out
}

/// Write a signal as `node_id,value` CSV.
pub fn write_signal_csv(path: &Path, u: &Signal) -> Result<()> {
    fs::write(path, signal_csv_string(u))?;
    Ok(())
}

/// Parse the `node_id,value` format into raw values (in node order).
/// The ids must be 0..n contiguous; a header row is required.
pub fn parse_signal_csv(text: &str, origin: &Path) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "node_id,value" => {}
        Some((_, header)) => {
            return Err(parse_err(
                origin,
                1,
                format!("expected header 'node_id,value', got {header:?}"),
            ))
        }
        None => return Err(parse_err(origin, 1, "empty signal file")),
    }
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (id_tok, val_tok) = line
            .split_once(',')
            .ok_or_else(|| parse_err(origin, line_no, "expected 'node_id,value' row"))?;
        let id: usize = id_tok
            .trim()
            .parse()
            .map_err(|_| parse_err(origin, line_no, format!("invalid node id: {id_tok:?}")))?;
        if id != values.len() {
            return Err(parse_err(
                origin,
                line_no,
                format!("node ids must be contiguous from 0; expected {}, got {id}", values.len()),
            ));
        }
        values.push(parse_f64(val_tok, origin, line_no, "value")?);
    }
    if values.is_empty() {
        return Err(parse_err(origin, 1, "signal file has no data rows"));
    }
    Ok(values)
}

/// Read a `node_id,value` CSV as a signal on the given domain.
pub fn read_signal_csv(path: &Path, domain: &dyn Domain) -> Result<Signal> {
    let text = fs::read_to_string(path)?;
    let values = parse_signal_csv(&text, path)?;
    if values.len() != domain.node_count() {
        return Err(Error::LengthMismatch {
            context: "read_signal_csv",
            expected: domain.node_count(),
            got: values.len(),
        });
    }
    Signal::from_values(domain, values)
}

// ---------------------------------------------------------------------------
// Histories
// ---------------------------------------------------------------------------

/// Render flow history rows with columns
/// `k,J,norm2_u,lambda,theta,R,step_displacement`; optional columns are
/// left empty when absent.
pub fn history_csv_string(rows: &[IterationRecord]) -> String {
    let mut out = String::with_capacity(64 * rows.len() + 64);
    out.push_str("k,J,norm2_u,lambda,theta,R,step_displacement\n");
    for r in rows {
        let _ = write!(out, "{},", r.k);
        if let Some(j) = r.j {
            let _ = write!(out, "{j}");
        }
        let _ = write!(out, ",{},{},{},", r.norm_u, r.lambda, r.theta);
        if let Some(q) = r.rayleigh {
            let _ = write!(out, "{q}");
        }
        let _ = writeln!(out, ",{}", r.displacement);
    }
    out
}

/// Write flow history rows as CSV.
pub fn write_history_csv(path: &Path, rows: &[IterationRecord]) -> Result<()> {
    fs::write(path, history_csv_string(rows))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Point clouds
// ---------------------------------------------------------------------------

/// Read a point cloud: one row per point, comma-separated coordinates.
/// Blank lines and `#` comments are skipped; every row must have the same
/// dimension, inferred from the first.
pub fn read_point_cloud_csv(path: &Path) -> Result<PointCloud> {
    let text = fs::read_to_string(path)?;
    let mut dim = 0usize;
    let mut coords = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| parse_f64(tok, path, line_no, "coordinate"))
            .collect::<Result<_>>()?;
        if dim == 0 {
            dim = row.len();
        } else if row.len() != dim {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {dim} coordinates, got {}", row.len()),
            ));
        }
        coords.extend(row);
    }
    if dim == 0 {
        return Err(parse_err(path, 1, "point cloud file has no data rows"));
    }
    PointCloud::new(dim, coords)
}

/// Write a point cloud in the same row-per-point format.
pub fn write_point_cloud_csv(path: &Path, points: &PointCloud) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for i in 0..points.len() {
        let row: Vec<String> = points.point(i).iter().map(|c| c.to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Dense matrices
// ---------------------------------------------------------------------------

/// Read a dense square matrix (row-major, one CSV row per matrix row).
/// Returns `(n, entries)` with `entries.len() == n * n`.
pub fn read_matrix_csv(path: &Path) -> Result<(usize, Vec<f64>)> {
    let text = fs::read_to_string(path)?;
    let mut n = 0usize;
    let mut data = Vec::new();
    let mut rows = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| parse_f64(tok, path, line_no, "matrix entry"))
            .collect::<Result<_>>()?;
        if n == 0 {
            n = row.len();
        } else if row.len() != n {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {n} entries per row, got {}", row.len()),
            ));
        }
        rows += 1;
        if rows > n {
            return Err(parse_err(path, line_no, "matrix has more rows than columns"));
        }
        data.extend(row);
    }
    if n == 0 {
        return Err(parse_err(path, 1, "matrix file has no data rows"));
    }
    if rows != n {
        return Err(parse_err(
            path,
            1,
            format!("matrix must be square: {rows} rows of {n} entries"),
        ));
    }
    Ok((n, data))
}

// ---------------------------------------------------------------------------
// PGM (P5) + scale sidecar
// ---------------------------------------------------------------------------

/// Bit depth for PGM export.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmDepth {
    Eight,
    Sixteen,
}

impl PgmDepth {
    fn maxval(self) -> u32 {
        match self {
            PgmDepth::Eight => 255,
            PgmDepth::Sixteen => 65535,
        }
    }
}

/// Sidecar path for a PGM file: `<path>.scale.txt`.
pub fn pgm_sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".scale.txt");
    os.into()
}

/// Write a 2D field as binary PGM (P5), min–max scaled to the full bit
/// range, and record the affine scale in a `<path>.scale.txt` sidecar with
/// lines `min=…`, `max=…`, `bits=…`. A constant field maps to 0 everywhere
/// (with `min = max` recorded).
pub fn write_pgm(path: &Path, u: &Signal, grid: &GridDomain, depth: PgmDepth) -> Result<()> {
    if u.domain_id() != grid.domain_id() || u.len() != grid.node_count() {
        return Err(Error::DomainMismatch { context: "write_pgm" });
    }
    let vals = u.values();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in vals {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let maxval = depth.maxval();
    let span = hi - lo;
    let scale = if span > 0.0 { maxval as f64 / span } else { 0.0 };

    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    write!(w, "P5\n{} {}\n{}\n", grid.width(), grid.height(), maxval)?;
    for &v in vals {
        let q = ((v - lo) * scale).round().clamp(0.0, maxval as f64) as u32;
        match depth {
            PgmDepth::Eight => w.write_all(&[q as u8])?,
            PgmDepth::Sixteen => w.write_all(&(q as u16).to_be_bytes())?,
        }
    }
    w.flush()?;

    let bits = match depth {
        PgmDepth::Eight => 8,
        PgmDepth::Sixteen => 16,
    };
    fs::write(
        pgm_sidecar_path(path),
        format!("min={lo}\nmax={hi}\nbits={bits}\n"),
    )?;
    Ok(())
}

/// Read a binary PGM (P5). Returns `(width, height, values)` with values
/// scaled to `[0, 1]` by the file's maxval, in row-major order.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = fs::read(path)?;
    let mut pos = 0usize;

    // Header: magic, width, height, maxval — whitespace separated, with
    // '#' comments running to end of line.
    let mut token = |what: &str| -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(parse_err(path, 1, format!("missing {what} in PGM header")));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    let magic = token("magic number")?;
    if magic != "P5" {
        return Err(parse_err(path, 1, format!("not a binary PGM (P5): {magic:?}")));
    }
    let width: usize = token("width")?
        .parse()
        .map_err(|_| parse_err(path, 1, "invalid PGM width"))?;
    let height: usize = token("height")?
        .parse()
        .map_err(|_| parse_err(path, 1, "invalid PGM height"))?;
    let maxval: u32 = token("maxval")?
        .parse()
        .map_err(|_| parse_err(path, 1, "invalid PGM maxval"))?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(parse_err(path, 1, "PGM dimensions or maxval out of range"));
    }
    pos += 1; // single whitespace byte after maxval

    let n = width * height;
    let wide = maxval > 255;
    let need = n * if wide { 2 } else { 1 };
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| parse_err(path, 1, "PGM raster truncated"))?;
    let inv = 1.0 / maxval as f64;
    let values = if wide {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * inv)
            .collect()
    } else {
        raster.iter().map(|&b| b as f64 * inv).collect()
    };
    Ok((width, height, values))
}

/// Read the `<path>.scale.txt` sidecar written by [`write_pgm`]:
/// returns `(min, max, bits)`.
pub fn read_pgm_sidecar(pgm_path: &Path) -> Result<(f64, f64, u32)> {
    let sidecar = pgm_sidecar_path(pgm_path);
    let text = fs::read_to_string(&sidecar)?;
    let (mut lo, mut hi, mut bits) = (None, None, None);
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, val) = line
            .split_once('=')
            .ok_or_else(|| parse_err(&sidecar, line_no, "expected key=value"))?;
        match key.trim() {
            "min" => lo = Some(parse_f64(val, &sidecar, line_no, "min")?),
            "max" => hi = Some(parse_f64(val, &sidecar, line_no, "max")?),
            "bits" => {
                bits = Some(val.trim().parse::<u32>().map_err(|_| {
                    parse_err(&sidecar, line_no, format!("invalid bits: {val:?}"))
                })?)
            }
            other => {
                return Err(parse_err(
                    &sidecar,
                    line_no,
                    format!("unknown sidecar key {other:?}"),
                ))
            }
        }
    }
    match (lo, hi, bits) {
        (Some(lo), Some(hi), Some(bits)) => Ok((lo, hi, bits)),
        _ => Err(parse_err(&sidecar, 1, "sidecar must define min, max and bits")),
    }
}

/// Pipe a string through an external command, returning its stdout.
/// The write happens on a helper thread so large payloads cannot deadlock
/// against a full stdout pipe.
pub fn pipe_through_command(
    program: &str,
    args: &[String],
    input: String,
) -> Result<String> {
    use std::process::{Command, Stdio};
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::Operator(format!("failed to spawn {program:?}: {e}")))?;
    let mut stdin = child.stdin.take().expect("stdin was piped");
    let writer = std::thread::spawn(move || -> std::io::Result<()> {
        stdin.write_all(input.as_bytes())?;
        Ok(())
    });
    let mut stdout = String::new();
    child
        .stdout
        .take()
        .expect("stdout was piped")
        .read_to_string(&mut stdout)?;
    let mut stderr = String::new();
    child
        .stderr
        .take()
        .expect("stderr was piped")
        .read_to_string(&mut stderr)?;
    let status = child.wait()?;
    writer
        .join()
        .map_err(|_| Error::Operator("stdin writer thread panicked".into()))?
        .map_err(|e| Error::Operator(format!("writing to {program:?} failed: {e}")))?;
    if !status.success() {
        return Err(Error::Operator(format!(
            "{program:?} exited with {status}: {}",
            stderr.trim()
        )));
    }
    Ok(stdout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::GridDomain;

    #[test]
    fn signal_csv_roundtrip_is_exact() {
        let grid = GridDomain::new(3, 2, 1.0).unwrap();
        let u = Signal::from_values(
            &grid,
            vec![0.1, -2.5e-13, 3.0, f64::MIN_POSITIVE, 1.0 / 3.0, -7.25],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.csv");
        write_signal_csv(&path, &u).unwrap();
        let back = read_signal_csv(&path, &grid).unwrap();
        assert_eq!(u.values(), back.values());
    }

    #[test]
    fn signal_csv_rejects_gaps_with_line_context() {
        let grid = GridDomain::line(3, 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "node_id,value\n0,1.0\n2,3.0\n").unwrap();
        match read_signal_csv(&path, &grid) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn history_csv_blank_cells_for_missing_columns() {
        let rows = vec![IterationRecord {
            k: 0,
            j: None,
            norm_u: 1.0,
            lambda: 0.5,
            theta: 0.25,
            rayleigh: None,
            displacement: 0.125,
        }];
        let text = history_csv_string(&rows);
        assert_eq!(
            text,
            "k,J,norm2_u,lambda,theta,R,step_displacement\n0,,1,0.5,0.25,,0.125\n"
        );
    }

    #[test]
    fn point_cloud_roundtrip() {
        let points = PointCloud::new(2, vec![0.0, 1.0, -0.5, 2.25, 1e-9, 3.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pts.csv");
        write_point_cloud_csv(&path, &points).unwrap();
        let back = read_point_cloud_csv(&path).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back.point(1), points.point(1));
    }

    #[test]
    fn matrix_csv_must_be_square() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, "1,0\n0,1\n2,2\n").unwrap();
        assert!(matches!(read_matrix_csv(&path), Err(Error::Parse { .. })));
        std::fs::write(&path, "1,0\n0,1\n").unwrap();
        let (n, data) = read_matrix_csv(&path).unwrap();
        assert_eq!((n, data.as_slice()), (2, [1.0, 0.0, 0.0, 1.0].as_slice()));
    }

    #[test]
    fn pgm_roundtrip_both_depths() {
        let grid = GridDomain::new(4, 3, 1.0).unwrap();
        let u = Signal::from_fn(&grid, |i| (i as f64 * 0.37).sin()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for (depth, bits, tol) in [
            (PgmDepth::Eight, 8u32, 1.0 / 255.0),
            (PgmDepth::Sixteen, 16u32, 1.0 / 65535.0),
        ] {
            let path = dir.path().join(format!("f{bits}.pgm"));
            write_pgm(&path, &u, &grid, depth).unwrap();
            let (w, h, vals) = read_pgm(&path).unwrap();
            assert_eq!((w, h), (4, 3));
            let (lo, hi, got_bits) = read_pgm_sidecar(&path).unwrap();
            assert_eq!(got_bits, bits);
            // undo the affine scaling; quantisation error bounded by one level
            for (orig, v01) in u.values().iter().zip(&vals) {
                let reconstructed = lo + v01 * (hi - lo);
                assert!((reconstructed - orig).abs() <= (hi - lo) * tol * 0.5 + 1e-12);
            }
        }
    }

    #[test]
    fn pgm_constant_field_is_all_zero() {
        let grid = GridDomain::new(2, 2, 1.0).unwrap();
        let u = Signal::constant(&grid, 5.5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flat.pgm");
        write_pgm(&path, &u, &grid, PgmDepth::Eight).unwrap();
        let (_, _, vals) = read_pgm(&path).unwrap();
        assert!(vals.iter().all(|&v| v == 0.0));
        let (lo, hi, _) = read_pgm_sidecar(&path).unwrap();
        assert_eq!((lo, hi), (5.5, 5.5));
    }

    #[test]
    fn pipe_through_cat_is_identity() {
        let out = pipe_through_command("cat", &[], "node_id,value\n0,1.5\n".into()).unwrap();
        assert_eq!(out, "node_id,value\n0,1.5\n");
    }
}
